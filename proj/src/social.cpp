#include "trajcast/social.hpp"

#include <cmath>

namespace traj {

SocialKind social_kind_from_string(const std::string& s) {
    if (s == "none") return SocialKind::None;
    if (s == "square_grid") return SocialKind::SquareGrid;
    if (s == "circular_map") return SocialKind::CircularMap;
    if (s == "angular_grid") return SocialKind::AngularGrid;
    throw ConfigError("unknown social kind '" + s +
                      "' (expected none|square_grid|circular_map|angular_grid)");
}

std::string to_string(SocialKind k) {
    switch (k) {
        case SocialKind::None: return "none";
        case SocialKind::SquareGrid: return "square_grid";
        case SocialKind::CircularMap: return "circular_map";
        case SocialKind::AngularGrid: return "angular_grid";
    }
    return "?";
}

void SocialConfig::validate() const {
    if (l <= 0 || c <= 0) throw ConfigError("social: l and c must be positive");
    if (d <= 0 || 360 / d <= 0) throw ConfigError("social: d must divide into a positive length");
    if (cell_side <= 0.0f || ring_spacing <= 0.0f || angular_range <= 0.0f)
        throw ConfigError("social: cell_side, ring_spacing and angular_range must be positive");
}

int social_feature_len(const SocialConfig& cfg) {
    switch (cfg.kind) {
        case SocialKind::None: return 0;
        case SocialKind::SquareGrid: return cfg.l * cfg.l;
        case SocialKind::CircularMap: return cfg.c * 4;
        case SocialKind::AngularGrid: return 360 / cfg.d;
    }
    return 0;
}

std::vector<float> square_occupancy(Vec2 subject, const std::vector<Vec2>& neighbors,
                                    const SocialConfig& cfg) {
    cfg.validate();
    std::vector<float> grid(static_cast<size_t>(cfg.l) * cfg.l, 0.0f);
    const int half = cfg.l / 2;
    for (Vec2 n : neighbors) {
        const float dx = n.x - subject.x;
        const float dy = n.y - subject.y;
        const int cx = static_cast<int>(std::floor(dx / cfg.cell_side)) + half;
        const int cy = static_cast<int>(std::floor(dy / cfg.cell_side)) + half;
        if (cx < 0 || cx >= cfg.l || cy < 0 || cy >= cfg.l) continue;
        float& cell = grid[static_cast<size_t>(cx) * cfg.l + cy];
        cell = cfg.binary ? 1.0f : cell + 1.0f;
    }
    return grid;
}

std::vector<float> circular_occupancy(Vec2 subject, const std::vector<Vec2>& neighbors,
                                      const SocialConfig& cfg) {
    cfg.validate();
    std::vector<float> rings(static_cast<size_t>(cfg.c) * 4, 0.0f);
    const double max_r = static_cast<double>(cfg.c) * cfg.ring_spacing;
    for (Vec2 n : neighbors) {
        const double dx = n.x - subject.x;
        const double dy = n.y - subject.y;
        const double r = std::hypot(dx, dy);
        if (r <= 0.0 || r > max_r) continue;  // ring 0 starts just above the subject
        // ring j covers (j*spacing, (j+1)*spacing]
        int ring = static_cast<int>(std::ceil(r / cfg.ring_spacing)) - 1;
        if (ring < 0) ring = 0;
        if (ring >= cfg.c) continue;
        double bearing = std::atan2(dy, dx);
        if (bearing < 0.0) bearing += 2.0 * M_PI;
        int quad = static_cast<int>(bearing / (M_PI / 2.0));
        if (quad > 3) quad = 3;  // bearing == 2*pi wraps into the last sector
        float& cell = rings[static_cast<size_t>(ring) * 4 + quad];
        cell = cfg.binary ? 1.0f : cell + 1.0f;
    }
    return rings;
}

std::vector<float> angular_grid(Vec2 subject, const std::vector<Vec2>& neighbors,
                                const SocialConfig& cfg) {
    cfg.validate();
    const int sectors = 360 / cfg.d;
    std::vector<float> out(static_cast<size_t>(sectors), cfg.angular_range);
    const double sector_rad = static_cast<double>(cfg.d) * M_PI / 180.0;
    for (Vec2 n : neighbors) {
        const double dx = n.x - subject.x;
        const double dy = n.y - subject.y;
        const double r = std::hypot(dx, dy);
        if (r <= 0.0 || r > cfg.angular_range) continue;
        double bearing = std::atan2(dy, dx);
        if (bearing < 0.0) bearing += 2.0 * M_PI;
        int sec = static_cast<int>(bearing / sector_rad);
        if (sec >= sectors) sec = sectors - 1;
        if (static_cast<float>(r) < out[static_cast<size_t>(sec)])
            out[static_cast<size_t>(sec)] = static_cast<float>(r);
    }
    return out;
}

std::vector<float> social_feature(Vec2 subject, const std::vector<Vec2>& neighbors,
                                  const SocialConfig& cfg) {
    switch (cfg.kind) {
        case SocialKind::None: return {};
        case SocialKind::SquareGrid: return square_occupancy(subject, neighbors, cfg);
        case SocialKind::CircularMap: return circular_occupancy(subject, neighbors, cfg);
        case SocialKind::AngularGrid: return angular_grid(subject, neighbors, cfg);
    }
    return {};
}

}  // namespace traj
