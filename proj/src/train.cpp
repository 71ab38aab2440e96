#include "trajcast/train.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "trajcast/batching.hpp"

namespace traj {

Checkpoint train_run(const TrainConfig& cfg, const std::vector<Sample>& train_samples,
                     std::vector<EpochLog>* log, const Checkpoint* resume, int pause_at_epoch) {
    if (train_samples.empty()) throw ContractError("train_run: empty training set");
    cfg.model.validate();

    Checkpoint ckpt;
    ckpt.spec = cfg.model;
    ckpt.norm = cfg.norm;
    ckpt.seed = cfg.seed;
    ckpt.config_fp = cfg.fingerprint();
    int start_epoch = 0;
    if (resume) {
        if (resume->config_fp != ckpt.config_fp)
            throw ConfigError("train_run: resume checkpoint was produced by a different config");
        ckpt.params = resume->params;
        ckpt.opt = resume->opt;
        start_epoch = static_cast<int>(resume->epoch);
    } else {
        ckpt.params = build_model<float>(cfg.model, cfg.seed);
    }

    AugmentConfig aug;
    aug.rotate = cfg.aug_rotate;
    aug.mirror = cfg.aug_mirror;
    aug.noise_sigma = cfg.aug_noise ? cfg.noise_sigma : 0.0f;
    aug.rng_seed = cfg.seed;
    const bool augment_on = aug.rotate || aug.mirror || aug.noise_sigma > 0.0f;
    const bool uses_batchnorm = cfg.model.family == ModelFamily::Conv2d;

    std::vector<size_t> order(train_samples.size());
    std::iota(order.begin(), order.end(), size_t{0});

    const int until = pause_at_epoch >= 0 ? std::min(pause_at_epoch, cfg.epochs) : cfg.epochs;
    ckpt.epoch = start_epoch;
    for (int epoch = start_epoch; epoch < until; ++epoch) {
        const double lr = lr_schedule(epoch, cfg.base_lr, cfg.gamma, cfg.lr_step);
        RngStream shuffle_rng(stream_seed(cfg.seed, 0x73687566ull, static_cast<uint64_t>(epoch)));
        std::iota(order.begin(), order.end(), size_t{0});
        deterministic_shuffle(order, shuffle_rng);

        double loss_sum = 0.0;
        int64_t loss_count = 0;
        const size_t n = order.size();
        size_t batch_index = 0;
        for (size_t lo = 0; lo < n; lo += static_cast<size_t>(cfg.batch_size), ++batch_index) {
            const size_t hi = std::min(n, lo + static_cast<size_t>(cfg.batch_size));
            // batch statistics need at least two samples
            if (uses_batchnorm && hi - lo < 2) continue;
            std::vector<size_t> idx(order.begin() + static_cast<int64_t>(lo),
                                    order.begin() + static_cast<int64_t>(hi));

            Batch<float> batch =
                make_batch<float>(train_samples, idx, cfg.norm, cfg.model.social,
                                  augment_on ? &aug : nullptr, static_cast<uint64_t>(epoch));
            Tape<float> tape;
            auto fwd = model_forward(tape, cfg.model, ckpt.params, batch, true);
            NdArray<float> target = batch.target;
            const NodeId target_leaf = tape.leaf(std::move(target));
            const NodeId loss = ade_loss(tape, fwd.pred, target_leaf, cfg.norm == NormMode::Rel);

            const double loss_value = static_cast<double>(tape.value(loss).data[0]);
            if (!std::isfinite(loss_value))
                throw NumericError("train_run: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batch_index));
            loss_sum += loss_value * static_cast<double>(hi - lo);
            loss_count += static_cast<int64_t>(hi - lo);

            tape.backward(loss);

            std::vector<NdArray<float>*> params;
            std::vector<const std::vector<float>*> grads;
            std::vector<std::string> names;
            for (size_t i = 0; i < ckpt.params.entries.size(); ++i) {
                auto& e = ckpt.params.entries[i];
                if (!e.trainable) continue;
                params.push_back(&e.value);
                grads.push_back(&tape.grad(fwd.param_leaves[i]));
                names.push_back(e.name);
            }
            adam_step(params, grads, names, ckpt.opt, static_cast<float>(lr));
        }
        if (log)
            log->push_back(
                {epoch, lr, loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0});
        ckpt.epoch = epoch + 1;
    }
    return ckpt;
}

namespace {

constexpr uint32_t kCkptMagic = 0x544a434bu;  // "TJCK"

template <class T>
void put(std::string& buf, const T& v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_str(std::string& buf, const std::string& s) {
    put(buf, static_cast<uint32_t>(s.size()));
    buf.append(s);
}

struct Cursor {
    const char* base;
    const char* p;
    const char* end;
    size_t off() const { return static_cast<size_t>(p - base); }
    template <class T>
    T get() {
        if (p + sizeof(T) > end)
            throw CorruptionError("checkpoint truncated at offset " + std::to_string(off()));
        T v;
        std::memcpy(&v, p, sizeof(T));
        p += sizeof(T);
        return v;
    }
    std::string get_str() {
        const uint32_t n = get<uint32_t>();
        if (p + n > end)
            throw CorruptionError("checkpoint truncated at offset " + std::to_string(off()));
        std::string s(p, p + n);
        p += n;
        return s;
    }
    void get_floats(std::vector<float>& out, uint64_t n) {
        if (p + n * sizeof(float) > end)
            throw CorruptionError("checkpoint truncated at offset " + std::to_string(off()));
        out.resize(n);
        std::memcpy(out.data(), p, n * sizeof(float));
        p += n * sizeof(float);
    }
};

void put_spec(std::string& buf, const ModelSpec& m) {
    put(buf, static_cast<uint8_t>(m.family));
    put(buf, static_cast<int32_t>(m.kernel_size));
    uint8_t flags = 0;
    if (m.positional_embedding) flags |= 1;
    if (m.residual) flags |= 2;
    if (m.transpose_conv) flags |= 4;
    if (m.symmetric_time_padding) flags |= 8;
    put(buf, flags);
    put(buf, static_cast<int32_t>(m.embed_dim));
    put(buf, static_cast<int32_t>(m.lstm_hidden));
    put(buf, static_cast<uint8_t>(m.social.kind));
    put(buf, static_cast<int32_t>(m.social.l));
    put(buf, m.social.cell_side);
    put(buf, static_cast<int32_t>(m.social.c));
    put(buf, m.social.ring_spacing);
    put(buf, static_cast<int32_t>(m.social.d));
    put(buf, m.social.angular_range);
    put(buf, static_cast<uint8_t>(m.social.binary));
    put(buf, static_cast<uint32_t>(m.conv2d_channels.size()));
    for (const auto& [ci, co] : m.conv2d_channels) {
        put(buf, static_cast<int32_t>(ci));
        put(buf, static_cast<int32_t>(co));
    }
    put(buf, static_cast<int32_t>(m.conv1d_channels));
    put(buf, static_cast<int32_t>(m.conv1d_layers));
    put(buf, static_cast<int32_t>(m.obs_len));
    put(buf, static_cast<int32_t>(m.pred_len));
}

ModelSpec get_spec(Cursor& c) {
    ModelSpec m;
    m.family = static_cast<ModelFamily>(c.get<uint8_t>());
    m.kernel_size = c.get<int32_t>();
    const uint8_t flags = c.get<uint8_t>();
    m.positional_embedding = flags & 1;
    m.residual = flags & 2;
    m.transpose_conv = flags & 4;
    m.symmetric_time_padding = flags & 8;
    m.embed_dim = c.get<int32_t>();
    m.lstm_hidden = c.get<int32_t>();
    m.social.kind = static_cast<SocialKind>(c.get<uint8_t>());
    m.social.l = c.get<int32_t>();
    m.social.cell_side = c.get<float>();
    m.social.c = c.get<int32_t>();
    m.social.ring_spacing = c.get<float>();
    m.social.d = c.get<int32_t>();
    m.social.angular_range = c.get<float>();
    m.social.binary = c.get<uint8_t>() != 0;
    const uint32_t n_ch = c.get<uint32_t>();
    m.conv2d_channels.clear();
    for (uint32_t i = 0; i < n_ch; ++i) {
        const int32_t ci = c.get<int32_t>();
        const int32_t co = c.get<int32_t>();
        m.conv2d_channels.push_back({ci, co});
    }
    m.conv1d_channels = c.get<int32_t>();
    m.conv1d_layers = c.get<int32_t>();
    m.obs_len = c.get<int32_t>();
    m.pred_len = c.get<int32_t>();
    return m;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    std::string buf;
    put(buf, kCkptMagic);
    put(buf, Checkpoint::kVersion);
    put(buf, ckpt.config_fp);
    put(buf, ckpt.seed);
    put(buf, ckpt.epoch);
    put(buf, static_cast<uint8_t>(ckpt.norm));
    put_spec(buf, ckpt.spec);

    put(buf, static_cast<uint32_t>(ckpt.params.entries.size()));
    for (const auto& e : ckpt.params.entries) {
        put_str(buf, e.name);
        put(buf, static_cast<uint8_t>(e.trainable));
        put(buf, static_cast<uint32_t>(e.value.shape.size()));
        for (int64_t d : e.value.shape) put(buf, d);
        buf.append(reinterpret_cast<const char*>(e.value.data.data()),
                   e.value.data.size() * sizeof(float));
    }

    put(buf, ckpt.opt.t);
    put(buf, static_cast<uint32_t>(ckpt.opt.m.size()));
    for (size_t i = 0; i < ckpt.opt.m.size(); ++i) {
        put(buf, static_cast<uint64_t>(ckpt.opt.m[i].size()));
        buf.append(reinterpret_cast<const char*>(ckpt.opt.m[i].data()),
                   ckpt.opt.m[i].size() * sizeof(float));
        buf.append(reinterpret_cast<const char*>(ckpt.opt.v[i].data()),
                   ckpt.opt.v[i].size() * sizeof(float));
    }

    const uint64_t checksum = fnv1a64(buf.data(), buf.size());
    put(buf, checksum);
    return buf;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
    if (bytes.size() < sizeof(uint32_t) * 2 + sizeof(uint64_t))
        throw CorruptionError("checkpoint too short (" + std::to_string(bytes.size()) + " bytes)");
    uint64_t stored = 0;
    std::memcpy(&stored, bytes.data() + bytes.size() - sizeof(uint64_t), sizeof(uint64_t));
    const uint64_t actual = fnv1a64(bytes.data(), bytes.size() - sizeof(uint64_t));
    if (stored != actual) throw CorruptionError("checkpoint checksum mismatch");

    Cursor c{bytes.data(), bytes.data(), bytes.data() + bytes.size() - sizeof(uint64_t)};
    if (c.get<uint32_t>() != kCkptMagic) throw CorruptionError("not a checkpoint file");
    const uint32_t version = c.get<uint32_t>();
    if (version > Checkpoint::kVersion)
        throw VersionError("checkpoint format version " + std::to_string(version) +
                           " is newer than supported version " +
                           std::to_string(Checkpoint::kVersion));
    Checkpoint ckpt;
    ckpt.config_fp = c.get<uint64_t>();
    ckpt.seed = c.get<uint64_t>();
    ckpt.epoch = c.get<int64_t>();
    ckpt.norm = static_cast<NormMode>(c.get<uint8_t>());
    ckpt.spec = get_spec(c);

    const uint32_t n_params = c.get<uint32_t>();
    for (uint32_t i = 0; i < n_params; ++i) {
        const std::string name = c.get_str();
        const bool trainable = c.get<uint8_t>() != 0;
        const uint32_t ndim = c.get<uint32_t>();
        std::vector<int64_t> shape(ndim);
        for (auto& d : shape) d = c.get<int64_t>();
        auto& arr = ckpt.params.add(name, shape, trainable);
        c.get_floats(arr.data, static_cast<uint64_t>(numel_of(shape)));
    }

    ckpt.opt.t = c.get<int64_t>();
    const uint32_t n_moments = c.get<uint32_t>();
    ckpt.opt.m.resize(n_moments);
    ckpt.opt.v.resize(n_moments);
    for (uint32_t i = 0; i < n_moments; ++i) {
        const uint64_t len = c.get<uint64_t>();
        c.get_floats(ckpt.opt.m[i], len);
        c.get_floats(ckpt.opt.v[i], len);
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const std::string bytes = serialize_checkpoint(ckpt);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint: " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read checkpoint: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_checkpoint(ss.str());
}

std::string loss_log_csv(const std::vector<EpochLog>& log) {
    std::ostringstream os;
    os << "epoch,lr,train_loss\n";
    for (const auto& e : log) os << e.epoch << "," << e.lr << "," << e.loss << "\n";
    return os.str();
}

}  // namespace traj
