#include "trajcast/prep.hpp"

#include <cmath>

namespace traj {

NormMode norm_mode_from_string(const std::string& s) {
    if (s == "abs") return NormMode::Abs;
    if (s == "t0") return NormMode::T0;
    if (s == "tobs") return NormMode::Tobs;
    if (s == "rel") return NormMode::Rel;
    throw ConfigError("unknown norm_mode '" + s + "' (expected abs|t0|tobs|rel)");
}

std::string to_string(NormMode m) {
    switch (m) {
        case NormMode::Abs: return "abs";
        case NormMode::T0: return "t0";
        case NormMode::Tobs: return "tobs";
        case NormMode::Rel: return "rel";
    }
    return "?";
}

namespace {

Sample translate_all(const Sample& s, Vec2 origin) {
    Sample out = s;
    for (auto& p : out.obs) p = p - origin;
    for (auto& p : out.future) p = p - origin;
    for (auto& frame : out.neighbors)
        for (auto& p : frame) p = p - origin;
    return out;
}

}  // namespace

std::pair<Sample, NormContext> normalize(const Sample& s, NormMode mode) {
    if (s.obs.empty()) throw ContractError("normalize: sample has no observations");
    NormContext ctx;
    ctx.mode = mode;
    switch (mode) {
        case NormMode::Abs:
            ctx.anchor = Vec2{0.0f, 0.0f};
            return {s, ctx};
        case NormMode::T0:
            ctx.anchor = s.obs.front();
            return {translate_all(s, ctx.anchor), ctx};
        case NormMode::Tobs:
            ctx.anchor = s.obs.back();
            return {translate_all(s, ctx.anchor), ctx};
        case NormMode::Rel: {
            ctx.anchor = s.obs.back();
            Sample out = s;
            for (size_t t = s.obs.size(); t-- > 0;)
                out.obs[t] = t == 0 ? Vec2{0.0f, 0.0f} : s.obs[t] - s.obs[t - 1];
            for (size_t t = s.future.size(); t-- > 0;)
                out.future[t] = t == 0 ? s.future[0] - s.obs.back() : s.future[t] - s.future[t - 1];
            for (size_t t = 0; t < out.neighbors.size(); ++t)
                for (auto& p : out.neighbors[t]) p = p - s.obs[t];
            return {out, ctx};
        }
    }
    throw ContractError("normalize: unreachable");
}

std::vector<Vec2> denormalize(const std::vector<Vec2>& pred, const NormContext& ctx) {
    std::vector<Vec2> out;
    out.reserve(pred.size());
    switch (ctx.mode) {
        case NormMode::Abs:
            return pred;
        case NormMode::T0:
        case NormMode::Tobs:
            for (Vec2 p : pred) out.push_back(p + ctx.anchor);
            return out;
        case NormMode::Rel: {
            Vec2 acc = ctx.anchor;
            for (Vec2 d : pred) {
                acc = acc + d;
                out.push_back(acc);
            }
            return out;
        }
    }
    throw ContractError("denormalize: unknown normalization mode");
}

std::vector<Vec2> target_positions(const Sample& normalized, NormMode mode) {
    if (mode != NormMode::Rel) return normalized.future;
    std::vector<Vec2> out;
    out.reserve(normalized.future.size());
    Vec2 acc{0.0f, 0.0f};
    for (Vec2 d : normalized.future) {
        acc = acc + d;
        out.push_back(acc);
    }
    return out;
}

namespace {

Vec2 rot(Vec2 p, float c, float s) { return {c * p.x - s * p.y, s * p.x + c * p.y}; }

}  // namespace

Sample rotate_sample(const Sample& s, float theta) {
    const float c = std::cos(theta);
    const float sn = std::sin(theta);
    Sample out = s;
    for (auto& p : out.obs) p = rot(p, c, sn);
    for (auto& p : out.future) p = rot(p, c, sn);
    for (auto& frame : out.neighbors)
        for (auto& p : frame) p = rot(p, c, sn);
    return out;
}

Sample mirror_sample_axis(const Sample& s, MirrorAxis axis) {
    if (axis == MirrorAxis::None) return s;
    Sample out = s;
    const bool flip_y = axis == MirrorAxis::X;  // reflecting across x negates y
    auto apply = [&](Vec2& p) {
        if (flip_y)
            p.y = -p.y;
        else
            p.x = -p.x;
    };
    for (auto& p : out.obs) apply(p);
    for (auto& p : out.future) apply(p);
    for (auto& frame : out.neighbors)
        for (auto& p : frame) apply(p);
    return out;
}

Sample mirror_sample(const Sample& s, RngStream& rng) {
    const double u = rng.uniform01();
    if (u < 0.25) return mirror_sample_axis(s, MirrorAxis::X);
    if (u < 0.5) return mirror_sample_axis(s, MirrorAxis::Y);
    return s;
}

Sample jitter_sample(const Sample& s, float sigma, RngStream& rng) {
    if (sigma < 0.0f) throw ConfigError("jitter_sample: sigma must be >= 0");
    Sample out = s;
    for (auto& p : out.obs) {
        p.x += static_cast<float>(rng.gauss() * sigma);
        p.y += static_cast<float>(rng.gauss() * sigma);
    }
    for (auto& frame : out.neighbors)
        for (auto& p : frame) {
            p.x += static_cast<float>(rng.gauss() * sigma);
            p.y += static_cast<float>(rng.gauss() * sigma);
        }
    return out;
}

Sample augment_sample(const Sample& normalized, const AugmentConfig& cfg, uint64_t epoch,
                      uint64_t sample_index) {
    RngStream rng(stream_seed(cfg.rng_seed, epoch, sample_index));
    Sample out = normalized;
    if (cfg.mirror) out = mirror_sample(out, rng);
    if (cfg.rotate) out = rotate_sample(out, static_cast<float>(rng.uniform(0.0, 2.0 * M_PI)));
    if (cfg.noise_sigma > 0.0f) out = jitter_sample(out, cfg.noise_sigma, rng);
    return out;
}

}  // namespace traj
