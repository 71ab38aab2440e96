#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajcast/data.hpp"
#include "trajcast/util.hpp"

namespace traj {

// Coordinate frames offered to the models:
//   Abs  — raw scene coordinates
//   T0   — origin at the first observed point
//   Tobs — origin at the last observed point
//   Rel  — per-step displacements (first observed displacement is (0,0))
enum class NormMode : uint8_t { Abs, T0, Tobs, Rel };

NormMode norm_mode_from_string(const std::string& s);
std::string to_string(NormMode m);

struct NormContext {
    NormMode mode = NormMode::Tobs;
    // For Abs/T0/Tobs: the translation subtracted from every point.
    // For Rel: the last observed world position, the base of the cumulative sum.
    Vec2 anchor;
};

// Normalizes subject and neighbor coordinates; in Rel mode the neighbors are
// expressed relative to the subject's position at the same frame.
std::pair<Sample, NormContext> normalize(const Sample& s, NormMode mode);

// Maps a 12-step prediction in the normalized frame back to world meters.
std::vector<Vec2> denormalize(const std::vector<Vec2>& pred, const NormContext& ctx);

// Normalized targets as positions: for Rel this is the running sum of the
// future displacements (origin at the last observed point), otherwise the
// normalized future itself. The training loss compares positions in this frame.
std::vector<Vec2> target_positions(const Sample& normalized, NormMode mode);

// Rigid rotation of every stored position about the normalization origin.
Sample rotate_sample(const Sample& s, float theta);

enum class MirrorAxis : uint8_t { None, X, Y };

Sample mirror_sample_axis(const Sample& s, MirrorAxis axis);

// 25% reflect across the x-axis, 25% across the y-axis, 50% unchanged.
Sample mirror_sample(const Sample& s, RngStream& rng);

// Adds N(0, sigma^2) independently to every observed coordinate (subject and
// neighbors); future targets stay clean.
Sample jitter_sample(const Sample& s, float sigma, RngStream& rng);

struct AugmentConfig {
    bool rotate = false;
    bool mirror = false;
    float noise_sigma = 0.0f;
    uint64_t rng_seed = 0;
};

// Applies mirror -> rotate -> noise on an already-normalized sample with a
// stream derived from (seed, epoch, sample index); deterministic per triple.
Sample augment_sample(const Sample& normalized, const AugmentConfig& cfg, uint64_t epoch,
                      uint64_t sample_index);

}  // namespace traj
