#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "trajcast/util.hpp"

namespace traj {

struct Vec2 {
    float x = 0.0f;
    float y = 0.0f;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }

struct TrackRecord {
    int64_t frame = 0;
    int64_t ped = 0;
    double x = 0.0;
    double y = 0.0;
};

// Raw per-scene annotations at 0.4 s intervals. frame_step is the id distance
// between consecutive annotated frames (e.g. 10 for the ETH-UCY exports).
struct TrackTable {
    std::string scene_id;
    std::vector<TrackRecord> records;  // sorted by (ped, frame)
    double frame_interval = 0.4;
    int64_t frame_step = 1;
    bool labeled = true;  // TrajNet test splits carry observations only
};

// One record per line: frame_id ped_id x y (whitespace separated; ped_id may be
// an integral real like "3.0"). Throws ParseError with the offending line number.
TrackTable parse_track_file(std::string_view text, std::string scene_id);

// Inverse of parsing, with normalized field order; doubles are printed so that
// parse(serialize(t)) reproduces t exactly.
std::string serialize_track_table(const TrackTable& t);

struct Sample {
    std::string scene_id;
    int64_t ped_id = 0;
    int64_t first_frame = 0;
    std::vector<Vec2> obs;                   // length obs_len (8)
    std::vector<Vec2> future;                // length pred_len (12)
    std::vector<std::vector<Vec2>> neighbors;  // one list per observed frame
    bool labeled = true;
};

// Slide a window of obs_len + pred_len consecutive annotated frames over every
// pedestrian; a pedestrian must be present in all window frames. Neighbor lists
// hold the other pedestrians co-present in each of the observed frames.
// Unlabeled tables windows over obs_len frames only and leaves future empty.
std::vector<Sample> window_samples(const TrackTable& table, int obs_len = 8, int pred_len = 12,
                                   int stride = 1);

struct FoldPlan {
    struct Fold {
        std::vector<std::string> train_scenes;
        std::string test_scene;
    };
    std::vector<Fold> folds;
};

FoldPlan leave_one_out_folds(const std::vector<std::string>& scene_ids);

// Binary sample cache written by the ingest command.
void save_sample_cache(const std::vector<Sample>& samples, const std::string& path);
std::vector<Sample> load_sample_cache(const std::string& path);

}  // namespace traj
