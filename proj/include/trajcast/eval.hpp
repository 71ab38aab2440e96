#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajcast/data.hpp"
#include "trajcast/train.hpp"

namespace traj {

// Average Displacement Error: mean Euclidean distance over all pedestrians and
// all predicted timesteps. Arrays are row-major (n, T, 2) in world meters.
double ade(const float* pred, const float* truth, int64_t n, int64_t T);

// Final Displacement Error: mean Euclidean distance at the last timestep only.
double fde(const float* pred, const float* truth, int64_t n, int64_t T);

double ade(const std::vector<std::vector<Vec2>>& pred, const std::vector<std::vector<Vec2>>& truth);
double fde(const std::vector<std::vector<Vec2>>& pred, const std::vector<std::vector<Vec2>>& truth);

struct EvalReport {
    std::string scene;
    int64_t n = 0;
    double ade = 0.0;
    double fde = 0.0;
    double mean_ade = 0.0;  // equals ade; kept with std/max for the distribution
    double std_ade = 0.0;
    double max_ade = 0.0;
    double hist_bin = 0.1;
    std::vector<int64_t> hist;  // per-sample ADE histogram counts
    struct Case {
        size_t sample_index = 0;
        std::string scene;
        int64_t ped_id = 0;
        int64_t first_frame = 0;
        double ade = 0.0;
        std::vector<Vec2> obs, future, pred;  // world frame, for inspection dumps
    };
    std::vector<Case> worst;  // k worst samples by ADE
    std::vector<double> per_sample_ade;
    std::vector<double> per_sample_fde;
};

// Runs the checkpointed model over a labeled test split (batch-norm in eval
// mode), denormalizes predictions to world meters and assembles the report.
EvalReport evaluate_fold(const Checkpoint& ckpt, const std::vector<Sample>& test_samples,
                         int worst_k = 10, double hist_bin = 0.1);

struct LayerGradStats {
    std::string name;
    double mean_abs = 0.0;
    double max_abs = 0.0;
};

// Per-parameter-tensor gradient magnitudes after one backward pass on a batch.
std::vector<LayerGradStats> gradient_flow_report(const Checkpoint& ckpt,
                                                 const std::vector<Sample>& batch_samples);

struct TimingRow {
    std::string model;
    int batch_size = 0;
    double per_element_seconds = 0.0;
    int64_t params = 0;
    int repeats = 0;
    double spread = 0.0;  // (q3 - q1) / median of the per-batch times
};

// Median forward latency per element over `repeats` runs after warmup.
std::vector<TimingRow> latency_benchmark(const std::vector<Checkpoint>& checkpoints,
                                         const std::vector<int>& batch_sizes = {1, 32},
                                         int repeats = 30);

std::string eval_report_csv(const std::vector<EvalReport>& reports);
std::string per_sample_csv(const EvalReport& report);
std::string histogram_csv(const EvalReport& report);
std::string worst_cases_csv(const EvalReport& report);
std::string timing_csv(const std::vector<TimingRow>& rows);

}  // namespace traj
