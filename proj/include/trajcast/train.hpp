#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajcast/config.hpp"
#include "trajcast/data.hpp"
#include "trajcast/models.hpp"
#include "trajcast/optim.hpp"

namespace traj {

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
};

struct Checkpoint {
    static constexpr uint32_t kVersion = 1;
    ModelSpec spec;
    NormMode norm = NormMode::Tobs;
    ParamStore<float> params;  // includes batch-norm running stats
    AdamState<float> opt;
    int64_t epoch = 0;
    uint64_t seed = 0;
    uint64_t config_fp = 0;
};

// Minimizes mean ADE in the normalized frame over shuffled mini-batches with
// on-the-fly augmentation. Deterministic for a fixed config and seed; resuming
// from a checkpoint at epoch k reproduces the uninterrupted run bit-exactly.
// pause_at_epoch stops early (an interrupted run) while keeping the config.
Checkpoint train_run(const TrainConfig& cfg, const std::vector<Sample>& train_samples,
                     std::vector<EpochLog>* log = nullptr, const Checkpoint* resume = nullptr,
                     int pause_at_epoch = -1);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::string loss_log_csv(const std::vector<EpochLog>& log);

}  // namespace traj
