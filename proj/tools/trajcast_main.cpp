// trajcast — train, evaluate and benchmark the trajectory predictors from the
// command line. Flags mirror config keys one-to-one; a flag wins over the file.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "trajcast/config.hpp"
#include "trajcast/data.hpp"
#include "trajcast/eval.hpp"
#include "trajcast/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace traj;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string compact_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
    return buf;
}

std::string hex64(uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct CliState {
    std::string config_path;
    ConfigDoc doc;
    std::string out_dir;

    TrainConfig resolved() const { return resolve_config(doc); }
};

void load_config_file(CliState& st) {
    if (st.config_path.empty()) return;
    ConfigDoc file = parse_config(read_file(st.config_path));
    // flags were already written into st.doc; file keys must not override them
    for (auto& [section, entries] : file.sections)
        for (auto& [k, v] : entries)
            if (!st.doc.find(section, k)) st.doc.set(section, k, v);
}

fs::path ensure_run_dir(CliState& st, const TrainConfig& cfg) {
    fs::path dir;
    if (!st.out_dir.empty()) {
        dir = st.out_dir;
    } else {
        const char* root_env = std::getenv("TRAJCAST_RUN_ROOT");
        const fs::path root = root_env && root_env[0] ? root_env : "runs";
        dir = root / (hex64(cfg.fingerprint()).substr(0, 8) + "-" + compact_now());
    }
    fs::create_directories(dir);
    return dir;
}

// the manifest is written before any training starts
void write_manifest(const fs::path& dir, const std::string& command, const TrainConfig& cfg) {
    json m;
    m["tool"] = "trajcast";
    m["version"] = kVersion;
    m["command"] = command;
    m["created_utc"] = utc_now();
    m["seed"] = cfg.seed;
    m["config_fingerprint"] = hex64(cfg.fingerprint());
    m["config"] = cfg.canonical_text();
    m["datasets"] = json::array();
    for (const auto& s : cfg.scenes) {
        const std::string bytes = read_file(s.path);
        json d;
        d["scene"] = s.id;
        d["path"] = s.path;
        d["frame_step"] = s.frame_step;
        d["labeled"] = s.labeled;
        d["bytes"] = bytes.size();
        d["fnv64"] = hex64(fnv1a64(bytes));
        m["datasets"].push_back(d);
    }
    write_file((dir / "manifest.json").string(), m.dump(2) + "\n");
}

TrackTable load_scene(const SceneSource& s) {
    TrackTable t = parse_track_file(read_file(s.path), s.id);
    t.frame_step = s.frame_step;
    t.labeled = s.labeled;
    return t;
}

std::vector<Sample> load_scene_samples(const SceneSource& s, const std::string& cache_dir) {
    if (!cache_dir.empty()) {
        const fs::path p = fs::path(cache_dir) / (s.id + ".samples");
        if (fs::exists(p)) return load_sample_cache(p.string());
    }
    return window_samples(load_scene(s));
}

std::string fmt3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

std::string folds_csv(const std::string& config_name, const std::vector<EvalReport>& reports) {
    std::ostringstream os;
    os << "config,scene,n,ade,fde\n";
    for (const auto& r : reports)
        os << config_name << "," << r.scene << "," << r.n << "," << r.ade << "," << r.fde << "\n";
    return os.str();
}

// Table-3-shaped row: one "ADE / FDE" cell per scene plus the scene average
std::string table_csv(const std::string& config_name, const std::vector<EvalReport>& reports) {
    std::ostringstream head, row;
    head << "config";
    row << config_name;
    double sa = 0.0, sf = 0.0;
    for (const auto& r : reports) {
        head << "," << r.scene;
        row << "," << fmt3(r.ade) << " / " << fmt3(r.fde);
        sa += r.ade;
        sf += r.fde;
    }
    head << ",average";
    row << "," << fmt3(sa / static_cast<double>(reports.size())) << " / "
        << fmt3(sf / static_cast<double>(reports.size()));
    return head.str() + "\n" + row.str() + "\n";
}

int cmd_ingest(CliState& st) {
    load_config_file(st);
    const TrainConfig cfg = st.resolved();
    if (cfg.scenes.empty()) throw ConfigError("ingest: no scenes in [data]");
    const fs::path dir = ensure_run_dir(st, cfg);
    write_manifest(dir, "ingest", cfg);
    for (const auto& s : cfg.scenes) {
        const auto samples = window_samples(load_scene(s));
        save_sample_cache(samples, (dir / (s.id + ".samples")).string());
        std::cout << s.id << ": " << samples.size() << " samples\n";
    }
    std::cout << "cached under " << dir.string() << "\n";
    return 0;
}

int cmd_train(CliState& st, const std::string& cache_dir) {
    load_config_file(st);
    const TrainConfig cfg = st.resolved();
    if (cfg.scenes.empty()) throw ConfigError("train: no scenes in [data]");
    const fs::path dir = ensure_run_dir(st, cfg);
    write_manifest(dir, "train", cfg);

    std::vector<Sample> train_samples;
    for (const auto& s : cfg.scenes) {
        if (!s.labeled) continue;
        const auto ss = load_scene_samples(s, cache_dir);
        train_samples.insert(train_samples.end(), ss.begin(), ss.end());
    }
    std::cout << cfg.model.display_name() << ": training on " << train_samples.size()
              << " samples, " << cfg.epochs << " epochs\n";
    std::vector<EpochLog> log;
    const Checkpoint ckpt = train_run(cfg, train_samples, &log);
    save_checkpoint(ckpt, (dir / "checkpoint.bin").string());
    write_file((dir / "loss_log.csv").string(), loss_log_csv(log));
    std::cout << "parameters: " << ckpt.params.trainable_count() << "\n";
    if (!log.empty()) std::cout << "final loss: " << log.back().loss << "\n";
    std::cout << "outputs under " << dir.string() << "\n";
    return 0;
}

int cmd_xval(CliState& st, const std::string& cache_dir) {
    load_config_file(st);
    const TrainConfig cfg = st.resolved();
    std::vector<std::string> scene_ids;
    for (const auto& s : cfg.scenes)
        if (s.labeled) scene_ids.push_back(s.id);
    const FoldPlan plan = leave_one_out_folds(scene_ids);
    const fs::path dir = ensure_run_dir(st, cfg);
    write_manifest(dir, "xval", cfg);

    std::map<std::string, std::vector<Sample>> by_scene;
    for (const auto& s : cfg.scenes)
        if (s.labeled) by_scene[s.id] = load_scene_samples(s, cache_dir);

    std::vector<EvalReport> reports;
    for (const auto& fold : plan.folds) {
        std::vector<Sample> train_samples;
        for (const auto& id : fold.train_scenes) {
            const auto& ss = by_scene[id];
            train_samples.insert(train_samples.end(), ss.begin(), ss.end());
        }
        std::cout << "fold " << fold.test_scene << ": training on " << train_samples.size()
                  << " samples\n";
        const Checkpoint ckpt = train_run(cfg, train_samples);
        save_checkpoint(ckpt, (dir / ("ckpt_" + fold.test_scene + ".bin")).string());
        EvalReport rep = evaluate_fold(ckpt, by_scene[fold.test_scene]);
        std::cout << "  " << fold.test_scene << ": ADE " << fmt3(rep.ade) << "  FDE "
                  << fmt3(rep.fde) << "\n";
        reports.push_back(std::move(rep));
    }
    const std::string name = cfg.model.display_name() + "-" + to_string(cfg.norm);
    write_file((dir / "folds.csv").string(), folds_csv(name, reports));
    write_file((dir / "table.csv").string(), table_csv(name, reports));
    std::cout << table_csv(name, reports);
    std::cout << "outputs under " << dir.string() << "\n";
    return 0;
}

int cmd_eval(CliState& st, const std::string& ckpt_path, const std::string& scene_id,
             const std::string& gradflow_path) {
    load_config_file(st);
    const TrainConfig cfg = st.resolved();
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const SceneSource* src = nullptr;
    for (const auto& s : cfg.scenes)
        if (s.id == scene_id) src = &s;
    if (!src) throw ConfigError("eval: scene '" + scene_id + "' is not in [data]");
    const auto samples = window_samples(load_scene(*src));
    const fs::path dir = ensure_run_dir(st, cfg);

    const EvalReport rep = evaluate_fold(ckpt, samples);
    write_file((dir / "report.csv").string(), eval_report_csv({rep}));
    write_file((dir / "per_sample.csv").string(), per_sample_csv(rep));
    write_file((dir / "histogram.csv").string(), histogram_csv(rep));
    write_file((dir / "worst.csv").string(), worst_cases_csv(rep));
    if (!gradflow_path.empty()) {
        const auto stats = gradient_flow_report(
            ckpt, std::vector<Sample>(samples.begin(),
                                      samples.begin() + std::min<size_t>(64, samples.size())));
        std::ostringstream os;
        os << "layer,mean_abs_grad,max_abs_grad\n";
        for (const auto& s : stats) os << s.name << "," << s.mean_abs << "," << s.max_abs << "\n";
        write_file(gradflow_path, os.str());
    }
    std::cout << scene_id << ": n=" << rep.n << " ADE " << fmt3(rep.ade) << "  FDE "
              << fmt3(rep.fde) << "  (per-sample mean " << fmt3(rep.mean_ade) << " std "
              << fmt3(rep.std_ade) << " max " << fmt3(rep.max_ade) << ")\n";
    std::cout << "outputs under " << dir.string() << "\n";
    return 0;
}

int cmd_bench(const std::vector<std::string>& models, const std::vector<int>& batches, int repeats,
              uint64_t seed, const std::string& out_path) {
    std::vector<Checkpoint> ckpts;
    for (const auto& name : models) {
        Checkpoint c;
        c.spec.family = model_family_from_string(name);
        c.spec.kernel_size = c.spec.family == ModelFamily::Conv2d ? 5 : 3;
        c.norm = NormMode::Tobs;
        c.params = build_model<float>(c.spec, seed);
        ckpts.push_back(std::move(c));
    }
    const auto rows = latency_benchmark(ckpts, batches, repeats);
    const std::string csv = timing_csv(rows);
    write_file(out_path, csv);
    std::cout << csv;
    for (const auto& r : rows)
        std::cout << "# " << r.model << " b" << r.batch_size << ": median over " << r.repeats
                  << " repeats, spread " << fmt3(r.spread * 100.0) << "%\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& fold_files, const std::string& out_path,
               const std::string& errors_file, const std::string& hist_out) {
    if (!fold_files.empty()) {
        // merge per-fold CSVs (config,scene,n,ade,fde) into one comparison table
        struct Row {
            std::vector<std::string> scenes;
            std::vector<double> ades, fdes;
        };
        std::vector<std::pair<std::string, Row>> rows;
        for (const auto& f : fold_files) {
            const std::string text = read_file(f);
            std::istringstream is(text);
            std::string line;
            std::getline(is, line);
            if (line != "config,scene,n,ade,fde")
                throw ParseError("report: " + f + " is not a folds.csv file");
            while (std::getline(is, line)) {
                if (line.empty()) continue;
                std::istringstream ls(line);
                std::string config, scene, n, a, d;
                std::getline(ls, config, ',');
                std::getline(ls, scene, ',');
                std::getline(ls, n, ',');
                std::getline(ls, a, ',');
                std::getline(ls, d, ',');
                auto it = std::find_if(rows.begin(), rows.end(),
                                       [&](const auto& r) { return r.first == config; });
                if (it == rows.end()) {
                    rows.push_back({config, {}});
                    it = rows.end() - 1;
                }
                it->second.scenes.push_back(scene);
                it->second.ades.push_back(std::stod(a));
                it->second.fdes.push_back(std::stod(d));
            }
        }
        std::ostringstream os;
        bool head_done = false;
        for (const auto& [config, r] : rows) {
            if (!head_done) {
                os << "config";
                for (const auto& s : r.scenes) os << "," << s;
                os << ",average\n";
                head_done = true;
            }
            os << config;
            double sa = 0.0, sf = 0.0;
            for (size_t i = 0; i < r.scenes.size(); ++i) {
                os << "," << fmt3(r.ades[i]) << " / " << fmt3(r.fdes[i]);
                sa += r.ades[i];
                sf += r.fdes[i];
            }
            os << "," << fmt3(sa / static_cast<double>(r.scenes.size())) << " / "
               << fmt3(sf / static_cast<double>(r.scenes.size())) << "\n";
        }
        write_file(out_path, os.str());
        std::cout << os.str();
    }
    if (!errors_file.empty()) {
        // per-sample dump -> error distribution summary
        const std::string text = read_file(errors_file);
        std::istringstream is(text);
        std::string line;
        std::getline(is, line);
        if (line.rfind("sample_index,", 0) != 0)
            throw ParseError("report: " + errors_file + " is not a per-sample dump");
        std::vector<double> errs;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            std::istringstream ls(line);
            std::string idx, scene, a;
            std::getline(ls, idx, ',');
            std::getline(ls, scene, ',');
            std::getline(ls, a, ',');
            errs.push_back(std::stod(a));
        }
        if (errs.empty()) throw ParseError("report: no samples in " + errors_file);
        double mean = 0.0, mx = 0.0;
        for (double e : errs) {
            mean += e;
            mx = std::max(mx, e);
        }
        mean /= static_cast<double>(errs.size());
        double var = 0.0;
        for (double e : errs) var += (e - mean) * (e - mean);
        const double stddev = std::sqrt(var / static_cast<double>(errs.size()));
        std::ostringstream os;
        os << "n,mean_ade,std_ade,max_ade\n"
           << errs.size() << "," << mean << "," << stddev << "," << mx << "\n";
        if (!hist_out.empty()) {
            std::ostringstream hs;
            hs << "bin_lo,bin_hi,count\n";
            const double bin = 0.1;
            const size_t n_bins = static_cast<size_t>(std::floor(mx / bin)) + 1;
            std::vector<int64_t> hist(n_bins, 0);
            for (double e : errs)
                hist[std::min(n_bins - 1, static_cast<size_t>(std::floor(e / bin)))] += 1;
            for (size_t i = 0; i < n_bins; ++i)
                hs << i * bin << "," << (i + 1) * bin << "," << hist[i] << "\n";
            write_file(hist_out, hs.str());
        }
        std::cout << os.str();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"trajcast: pedestrian trajectory forecasting toolkit"};
    app.require_subcommand(1);

    CliState st;
    std::string cache_dir, ckpt_path, scene_id, gradflow_path;
    std::vector<std::string> bench_models = {"conv2d", "lstm", "encdec"};
    std::vector<int> bench_batches = {1, 32};
    int bench_repeats = 30;
    uint64_t bench_seed = 1;
    std::string bench_out = "timing.csv";
    std::vector<std::string> fold_files;
    std::string report_out = "comparison.csv", errors_file, hist_out;

    auto add_common = [&](CLI::App* sub, bool with_cfg = true) {
        if (with_cfg) sub->add_option("--config", st.config_path, "config file path");
        sub->add_option("--out", st.out_dir, "output directory (default: run root + hash)");
        auto key = [&](const char* flag, const char* section, const char* k, const char* help) {
            sub->add_option_function<std::string>(
                flag, [&st, section, k](const std::string& v) { st.doc.set(section, k, v); }, help);
        };
        key("--preset", "train", "preset", "eth_ucy or trajnet");
        key("--epochs", "train", "epochs", "training epochs");
        key("--lr", "train", "base_lr", "base learning rate");
        key("--gamma", "train", "gamma", "lr decay factor");
        key("--lr-step", "train", "lr_step", "lr decay interval");
        key("--batch-size", "train", "batch_size", "mini-batch size");
        key("--seed", "train", "seed", "run seed");
        key("--norm", "prep", "norm_mode", "abs|t0|tobs|rel");
        key("--augment", "prep", "augment", "subset of rotate,mirror,noise");
        key("--noise-sigma", "prep", "noise_sigma", "jitter standard deviation (m)");
        key("--model", "model", "family", "conv1d|conv2d|lstm|encdec");
        key("--ks", "model", "kernel_size", "kernel size 3|5|7");
        key("--pe", "model", "positional_embedding", "positional embeddings (true/false)");
        key("--residual", "model", "residual", "residual connections (true/false)");
        key("--tconv", "model", "transpose_conv", "transpose convolutions (true/false)");
        key("--social", "social", "kind", "none|square_grid|circular_map|angular_grid");
    };

    auto* ingest = app.add_subcommand("ingest", "parse, window and cache samples");
    add_common(ingest);

    auto* train = app.add_subcommand("train", "train one model under one config");
    add_common(train);
    train->add_option("--cache", cache_dir, "sample cache directory from ingest");

    auto* xval = app.add_subcommand("xval", "leave-one-out cross-validation sweep");
    add_common(xval);
    xval->add_option("--cache", cache_dir, "sample cache directory from ingest");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a labeled scene");
    add_common(eval_cmd);
    eval_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    eval_cmd->add_option("--scene", scene_id, "scene id to evaluate")->required();
    eval_cmd->add_option("--gradflow", gradflow_path, "also write per-layer gradient stats CSV");

    auto* bench = app.add_subcommand("bench", "inference latency benchmark");
    bench->add_option("--models", bench_models, "model families to benchmark")->delimiter(',');
    bench->add_option("--batch", bench_batches, "batch sizes")->delimiter(',');
    bench->add_option("--repeats", bench_repeats, "timed repeats (min 30)");
    bench->add_option("--seed", bench_seed, "parameter init seed");
    bench->add_option("--out", bench_out, "timing CSV path");

    auto* report = app.add_subcommand("report", "merge fold CSVs and error dumps");
    report->add_option("--folds", fold_files, "folds.csv files to merge")->delimiter(',');
    report->add_option("--out", report_out, "merged comparison table path");
    report->add_option("--errors", errors_file, "per-sample dump to summarize");
    report->add_option("--hist", hist_out, "histogram CSV output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(ingest)) return cmd_ingest(st);
        if (app.got_subcommand(train)) return cmd_train(st, cache_dir);
        if (app.got_subcommand(xval)) return cmd_xval(st, cache_dir);
        if (app.got_subcommand(eval_cmd)) return cmd_eval(st, ckpt_path, scene_id, gradflow_path);
        if (app.got_subcommand(bench))
            return cmd_bench(bench_models, bench_batches, bench_repeats, bench_seed, bench_out);
        if (app.got_subcommand(report))
            return cmd_report(fold_files, report_out, errors_file, hist_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const OptimizerError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const DimensionError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
