#include "trajcast/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "trajcast/batching.hpp"

namespace traj {

double ade(const float* pred, const float* truth, int64_t n, int64_t T) {
    if (n < 1 || T < 1) throw DimensionError("ade: empty input");
    double sum = 0.0;
    for (int64_t i = 0; i < n; ++i)
        for (int64_t t = 0; t < T; ++t) {
            const int64_t k = (i * T + t) * 2;
            const double dx = static_cast<double>(pred[k]) - truth[k];
            const double dy = static_cast<double>(pred[k + 1]) - truth[k + 1];
            sum += std::sqrt(dx * dx + dy * dy);
        }
    return sum / static_cast<double>(n * T);
}

double fde(const float* pred, const float* truth, int64_t n, int64_t T) {
    if (n < 1 || T < 1) throw DimensionError("fde: empty input");
    double sum = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const int64_t k = (i * T + (T - 1)) * 2;
        const double dx = static_cast<double>(pred[k]) - truth[k];
        const double dy = static_cast<double>(pred[k + 1]) - truth[k + 1];
        sum += std::sqrt(dx * dx + dy * dy);
    }
    return sum / static_cast<double>(n);
}

namespace {

std::vector<float> flatten(const std::vector<std::vector<Vec2>>& v, int64_t& n, int64_t& T) {
    n = static_cast<int64_t>(v.size());
    T = n > 0 ? static_cast<int64_t>(v[0].size()) : 0;
    std::vector<float> out;
    out.reserve(static_cast<size_t>(n * T * 2));
    for (const auto& row : v) {
        if (static_cast<int64_t>(row.size()) != T)
            throw DimensionError("metric input is ragged: row of length " +
                                 std::to_string(row.size()) + " vs " + std::to_string(T));
        for (Vec2 p : row) {
            out.push_back(p.x);
            out.push_back(p.y);
        }
    }
    return out;
}

}  // namespace

double ade(const std::vector<std::vector<Vec2>>& pred,
           const std::vector<std::vector<Vec2>>& truth) {
    int64_t n1, t1, n2, t2;
    const auto a = flatten(pred, n1, t1);
    const auto b = flatten(truth, n2, t2);
    if (n1 != n2 || t1 != t2)
        throw DimensionError("ade: shape mismatch (" + std::to_string(n1) + "," +
                             std::to_string(t1) + ") vs (" + std::to_string(n2) + "," +
                             std::to_string(t2) + ")");
    return ade(a.data(), b.data(), n1, t1);
}

double fde(const std::vector<std::vector<Vec2>>& pred,
           const std::vector<std::vector<Vec2>>& truth) {
    int64_t n1, t1, n2, t2;
    const auto a = flatten(pred, n1, t1);
    const auto b = flatten(truth, n2, t2);
    if (n1 != n2 || t1 != t2)
        throw DimensionError("fde: shape mismatch (" + std::to_string(n1) + "," +
                             std::to_string(t1) + ") vs (" + std::to_string(n2) + "," +
                             std::to_string(t2) + ")");
    return fde(a.data(), b.data(), n1, t1);
}

// predictions for a span of samples, denormalized to world meters
static std::vector<std::vector<Vec2>> predict_world(const Checkpoint& ckpt,
                                                    const std::vector<Sample>& samples,
                                                    const std::vector<size_t>& idx,
                                                    ParamStore<float>& params) {
    std::vector<NormContext> ctxs;
    Batch<float> batch =
        make_batch<float>(samples, idx, ckpt.norm, ckpt.spec.social, nullptr, 0, &ctxs, false);
    Tape<float> tape;
    auto fwd = model_forward(tape, ckpt.spec, params, batch, false);
    const auto& pred = tape.value(fwd.pred);
    const int64_t B = pred.dim(0), T = pred.dim(1);
    std::vector<std::vector<Vec2>> world(static_cast<size_t>(B));
    for (int64_t b = 0; b < B; ++b) {
        std::vector<Vec2> normed(static_cast<size_t>(T));
        for (int64_t t = 0; t < T; ++t)
            normed[static_cast<size_t>(t)] = {pred.data[(b * T + t) * 2],
                                              pred.data[(b * T + t) * 2 + 1]};
        world[static_cast<size_t>(b)] = denormalize(normed, ctxs[static_cast<size_t>(b)]);
    }
    return world;
}

EvalReport evaluate_fold(const Checkpoint& ckpt, const std::vector<Sample>& test_samples,
                         int worst_k, double hist_bin) {
    if (test_samples.empty()) throw ContractError("evaluate_fold: empty test set");
    for (const auto& s : test_samples)
        if (!s.labeled)
            throw ContractError(
                "evaluate_fold: split contains unlabeled samples (TrajNet test labels are "
                "withheld); evaluation refused");

    EvalReport rep;
    rep.scene = test_samples.front().scene_id;
    rep.hist_bin = hist_bin;
    ParamStore<float> params = ckpt.params;  // running stats stay untouched in eval mode

    const size_t n = test_samples.size();
    const size_t chunk = 256;
    std::vector<std::vector<Vec2>> all_pred(n);
    for (size_t lo = 0; lo < n; lo += chunk) {
        const size_t hi = std::min(n, lo + chunk);
        std::vector<size_t> idx(hi - lo);
        std::iota(idx.begin(), idx.end(), lo);
        auto preds = predict_world(ckpt, test_samples, idx, params);
        for (size_t i = lo; i < hi; ++i) all_pred[i] = std::move(preds[i - lo]);
    }

    double sum_ade = 0.0, sum_fde = 0.0;
    rep.per_sample_ade.resize(n);
    rep.per_sample_fde.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const auto& truth = test_samples[i].future;
        const auto& pred = all_pred[i];
        const int64_t T = static_cast<int64_t>(truth.size());
        double s = 0.0;
        for (int64_t t = 0; t < T; ++t) {
            const double dx = static_cast<double>(pred[static_cast<size_t>(t)].x) -
                              truth[static_cast<size_t>(t)].x;
            const double dy = static_cast<double>(pred[static_cast<size_t>(t)].y) -
                              truth[static_cast<size_t>(t)].y;
            s += std::sqrt(dx * dx + dy * dy);
        }
        rep.per_sample_ade[i] = s / static_cast<double>(T);
        const double dx = static_cast<double>(pred.back().x) - truth.back().x;
        const double dy = static_cast<double>(pred.back().y) - truth.back().y;
        rep.per_sample_fde[i] = std::sqrt(dx * dx + dy * dy);
        sum_ade += rep.per_sample_ade[i];
        sum_fde += rep.per_sample_fde[i];
    }
    rep.n = static_cast<int64_t>(n);
    rep.ade = sum_ade / static_cast<double>(n);
    rep.fde = sum_fde / static_cast<double>(n);
    rep.mean_ade = rep.ade;
    double var = 0.0;
    rep.max_ade = 0.0;
    for (double e : rep.per_sample_ade) {
        var += (e - rep.mean_ade) * (e - rep.mean_ade);
        rep.max_ade = std::max(rep.max_ade, e);
    }
    rep.std_ade = std::sqrt(var / static_cast<double>(n));

    const size_t n_bins = static_cast<size_t>(std::floor(rep.max_ade / hist_bin)) + 1;
    rep.hist.assign(n_bins, 0);
    for (double e : rep.per_sample_ade) {
        size_t bin = static_cast<size_t>(std::floor(e / hist_bin));
        if (bin >= n_bins) bin = n_bins - 1;
        rep.hist[bin] += 1;
    }

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return rep.per_sample_ade[a] > rep.per_sample_ade[b]; });
    const size_t k = std::min(static_cast<size_t>(worst_k), n);
    for (size_t i = 0; i < k; ++i) {
        const size_t si = order[i];
        EvalReport::Case c;
        c.sample_index = si;
        c.scene = test_samples[si].scene_id;
        c.ped_id = test_samples[si].ped_id;
        c.first_frame = test_samples[si].first_frame;
        c.ade = rep.per_sample_ade[si];
        c.obs = test_samples[si].obs;
        c.future = test_samples[si].future;
        c.pred = all_pred[si];
        rep.worst.push_back(std::move(c));
    }
    return rep;
}

std::vector<LayerGradStats> gradient_flow_report(const Checkpoint& ckpt,
                                                 const std::vector<Sample>& batch_samples) {
    if (batch_samples.empty()) throw ContractError("gradient_flow_report: empty batch");
    ParamStore<float> params = ckpt.params;  // keep the caller's running stats intact
    std::vector<size_t> idx(batch_samples.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    Batch<float> batch =
        make_batch<float>(batch_samples, idx, ckpt.norm, ckpt.spec.social, nullptr, 0);
    Tape<float> tape;
    auto fwd = model_forward(tape, ckpt.spec, params, batch, true);
    const NodeId target_leaf = tape.leaf(std::move(batch.target));
    const NodeId loss = ade_loss(tape, fwd.pred, target_leaf, ckpt.norm == NormMode::Rel);
    tape.backward(loss);

    std::vector<LayerGradStats> out;
    for (size_t i = 0; i < params.entries.size(); ++i) {
        const auto& e = params.entries[i];
        if (!e.trainable) continue;
        const auto& g = tape.grad(fwd.param_leaves[i]);
        LayerGradStats st;
        st.name = e.name;
        for (float v : g) {
            const double a = std::abs(static_cast<double>(v));
            st.mean_abs += a;
            st.max_abs = std::max(st.max_abs, a);
        }
        st.mean_abs /= static_cast<double>(g.size());
        out.push_back(std::move(st));
    }
    return out;
}

std::vector<TimingRow> latency_benchmark(const std::vector<Checkpoint>& checkpoints,
                                         const std::vector<int>& batch_sizes, int repeats) {
    if (repeats < 30) repeats = 30;
    using Clock = std::chrono::steady_clock;
    std::vector<TimingRow> rows;
    for (const auto& ckpt : checkpoints) {
        ParamStore<float> params = ckpt.params;
        for (int bs : batch_sizes) {
            RngStream rng(0x6265636bull);
            Batch<float> batch;
            batch.obs = NdArray<float>::zeros({bs, ckpt.spec.obs_len, 2});
            for (auto& v : batch.obs.data) v = static_cast<float>(rng.uniform(-2.0, 2.0));
            const int S = ckpt.spec.social_len();
            if (S > 0) {
                batch.social = NdArray<float>::zeros({bs, ckpt.spec.obs_len, S});
                for (auto& v : batch.social.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
            }

            auto run_once = [&]() {
                Tape<float> tape;
                auto fwd = model_forward(tape, ckpt.spec, params, batch, false);
                return tape.value(fwd.pred).data[0];  // keep the forward pass observable
            };
            volatile float sink = 0.0f;
            for (int i = 0; i < 5; ++i) sink = run_once();

            std::vector<double> times(static_cast<size_t>(repeats));
            for (int i = 0; i < repeats; ++i) {
                const auto t0 = Clock::now();
                sink = run_once();
                const auto t1 = Clock::now();
                times[static_cast<size_t>(i)] = std::chrono::duration<double>(t1 - t0).count();
            }
            (void)sink;
            std::sort(times.begin(), times.end());
            const double median = times[times.size() / 2];
            const double q1 = times[times.size() / 4];
            const double q3 = times[(times.size() * 3) / 4];

            TimingRow row;
            row.model = to_string(ckpt.spec.family);
            row.batch_size = bs;
            row.per_element_seconds = median / static_cast<double>(bs);
            row.params = ckpt.params.trainable_count();
            row.repeats = repeats;
            row.spread = median > 0.0 ? (q3 - q1) / median : 0.0;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::string eval_report_csv(const std::vector<EvalReport>& reports) {
    std::ostringstream os;
    os << "scene,n,ade,fde\n";
    double sum_ade = 0.0, sum_fde = 0.0;
    int64_t total = 0;
    for (const auto& r : reports) {
        os << r.scene << "," << r.n << "," << r.ade << "," << r.fde << "\n";
        sum_ade += r.ade;
        sum_fde += r.fde;
        total += r.n;
    }
    if (!reports.empty())
        os << "average," << total << "," << sum_ade / static_cast<double>(reports.size()) << ","
           << sum_fde / static_cast<double>(reports.size()) << "\n";
    return os.str();
}

std::string per_sample_csv(const EvalReport& report) {
    std::ostringstream os;
    os << "sample_index,scene,ade,fde\n";
    for (size_t i = 0; i < report.per_sample_ade.size(); ++i)
        os << i << "," << report.scene << "," << report.per_sample_ade[i] << ","
           << report.per_sample_fde[i] << "\n";
    return os.str();
}

std::string histogram_csv(const EvalReport& report) {
    std::ostringstream os;
    os << "bin_lo,bin_hi,count\n";
    for (size_t i = 0; i < report.hist.size(); ++i)
        os << static_cast<double>(i) * report.hist_bin << ","
           << static_cast<double>(i + 1) * report.hist_bin << "," << report.hist[i] << "\n";
    return os.str();
}

std::string worst_cases_csv(const EvalReport& report) {
    std::ostringstream os;
    os << "rank,scene,ped_id,first_frame,ade,kind,t,x,y\n";
    for (size_t r = 0; r < report.worst.size(); ++r) {
        const auto& c = report.worst[r];
        auto dump = [&](const char* kind, const std::vector<Vec2>& pts) {
            for (size_t t = 0; t < pts.size(); ++t)
                os << r << "," << c.scene << "," << c.ped_id << "," << c.first_frame << "," << c.ade
                   << "," << kind << "," << t << "," << pts[t].x << "," << pts[t].y << "\n";
        };
        dump("obs", c.obs);
        dump("future", c.future);
        dump("pred", c.pred);
    }
    return os.str();
}

std::string timing_csv(const std::vector<TimingRow>& rows) {
    std::ostringstream os;
    os << "model,batch_size,per_element_seconds,params\n";
    for (const auto& r : rows)
        os << r.model << "," << r.batch_size << "," << r.per_element_seconds << "," << r.params
           << "\n";
    return os.str();
}

}  // namespace traj
