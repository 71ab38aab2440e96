#pragma once

#include <cstdint>
#include <vector>

#include "trajcast/models.hpp"
#include "trajcast/prep.hpp"
#include "trajcast/social.hpp"

namespace traj {

// Normalizes (and optionally augments) the selected samples and packs them into
// model tensors. Social features are computed after geometric augmentation so
// occupancy patterns rotate with the trajectory. Contexts come back aligned
// with `indices` for later denormalization.
template <class Real>
Batch<Real> make_batch(const std::vector<Sample>& samples, const std::vector<size_t>& indices,
                       NormMode norm, const SocialConfig& social, const AugmentConfig* aug,
                       uint64_t epoch, std::vector<NormContext>* contexts = nullptr,
                       bool require_targets = true) {
    if (indices.empty()) throw ContractError("make_batch: empty batch");
    const int64_t B = static_cast<int64_t>(indices.size());
    const auto& first = samples.at(indices[0]);
    const int64_t T_obs = static_cast<int64_t>(first.obs.size());
    const int64_t T_pred = static_cast<int64_t>(first.future.size());
    const int64_t S = social_feature_len(social);

    Batch<Real> batch;
    batch.obs = NdArray<Real>::zeros({B, T_obs, 2});
    if (S > 0) batch.social = NdArray<Real>::zeros({B, T_obs, S});
    if (T_pred > 0) batch.target = NdArray<Real>::zeros({B, T_pred, 2});
    if (contexts) contexts->clear();

    for (int64_t b = 0; b < B; ++b) {
        const Sample& raw = samples.at(indices[static_cast<size_t>(b)]);
        if (static_cast<int64_t>(raw.obs.size()) != T_obs ||
            static_cast<int64_t>(raw.future.size()) != T_pred)
            throw DimensionError("make_batch: inconsistent sample lengths in batch");
        if (require_targets && (!raw.labeled || T_pred == 0))
            throw ContractError("make_batch: sample from an unlabeled split has no targets");
        auto [s, ctx] = normalize(raw, norm);
        if (aug) s = augment_sample(s, *aug, epoch, indices[static_cast<size_t>(b)]);
        if (contexts) contexts->push_back(ctx);

        for (int64_t t = 0; t < T_obs; ++t) {
            batch.obs.data[(b * T_obs + t) * 2 + 0] = static_cast<Real>(s.obs[t].x);
            batch.obs.data[(b * T_obs + t) * 2 + 1] = static_cast<Real>(s.obs[t].y);
        }
        if (T_pred > 0) {
            const auto targets = target_positions(s, norm);
            for (int64_t t = 0; t < T_pred; ++t) {
                batch.target.data[(b * T_pred + t) * 2 + 0] = static_cast<Real>(targets[t].x);
                batch.target.data[(b * T_pred + t) * 2 + 1] = static_cast<Real>(targets[t].y);
            }
        }
        if (S > 0) {
            for (int64_t t = 0; t < T_obs; ++t) {
                // in rel mode neighbors are already offsets from the subject
                const Vec2 subject =
                    norm == NormMode::Rel ? Vec2{0.0f, 0.0f} : s.obs[static_cast<size_t>(t)];
                const auto feat =
                    social_feature(subject, s.neighbors[static_cast<size_t>(t)], social);
                for (int64_t j = 0; j < S; ++j)
                    batch.social.data[(b * T_obs + t) * S + j] = static_cast<Real>(feat[j]);
            }
        }
    }
    return batch;
}

}  // namespace traj
