#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajcast/data.hpp"
#include "trajcast/util.hpp"

namespace traj {

enum class SocialKind : uint8_t { None, SquareGrid, CircularMap, AngularGrid };

SocialKind social_kind_from_string(const std::string& s);
std::string to_string(SocialKind k);

struct SocialConfig {
    SocialKind kind = SocialKind::None;
    int l = 10;                  // square grid cells per side
    float cell_side = 0.5f;      // meters
    int c = 12;                  // circle count
    float ring_spacing = 0.5f;   // meters
    int d = 8;                   // degrees per angular element
    float angular_range = 6.0f;  // meters
    bool binary = false;         // occupancy as presence instead of counts

    void validate() const;
};

// Flattened feature length for a given configuration (0 when kind is None).
int social_feature_len(const SocialConfig& cfg);

// l x l cell counts centered on the subject; a neighbor at relative (dx,dy)
// lands in cell (floor(dx/cell_side)+l/2, floor(dy/cell_side)+l/2), flattened
// as cell_x * l + cell_y. Neighbors outside the grid are ignored.
std::vector<float> square_occupancy(Vec2 subject, const std::vector<Vec2>& neighbors,
                                    const SocialConfig& cfg);

// c rings x 4 quadrants; ring j covers radius (j*spacing, (j+1)*spacing] and
// quadrants split the bearing from the +x axis into 90-degree sectors.
std::vector<float> circular_occupancy(Vec2 subject, const std::vector<Vec2>& neighbors,
                                      const SocialConfig& cfg);

// int(360/d) sectors holding the distance to the closest neighbor in that
// sector within angular_range; free sectors hold angular_range.
std::vector<float> angular_grid(Vec2 subject, const std::vector<Vec2>& neighbors,
                                const SocialConfig& cfg);

// Dispatch on cfg.kind; returns an empty vector for None.
std::vector<float> social_feature(Vec2 subject, const std::vector<Vec2>& neighbors,
                                  const SocialConfig& cfg);

}  // namespace traj
