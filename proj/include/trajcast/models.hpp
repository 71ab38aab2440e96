#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "trajcast/social.hpp"
#include "trajcast/tape.hpp"
#include "trajcast/util.hpp"

namespace traj {

enum class ModelFamily : uint8_t { Conv1d, Conv2d, Lstm, EncDec };

ModelFamily model_family_from_string(const std::string& s);
std::string to_string(ModelFamily f);

struct ModelSpec {
    ModelFamily family = ModelFamily::Conv2d;
    int kernel_size = 5;  // 3, 5 or 7
    bool positional_embedding = false;
    bool residual = false;
    bool transpose_conv = false;
    // Alternative reading of the 2D model's mid-section padding: symmetric
    // padding shrinks the feature axis together with the time axis.
    bool symmetric_time_padding = false;
    int embed_dim = 64;
    int lstm_hidden = 128;
    SocialConfig social;
    // conv2d per-layer (in, out) channel counts; the two layers before the
    // last two run after the upsample and reduce the time axis
    std::vector<std::pair<int, int>> conv2d_channels = {{1, 16},  {16, 32}, {32, 48}, {48, 48},
                                                        {48, 32}, {32, 16}, {16, 1}};
    int conv1d_channels = 64;
    int conv1d_layers = 7;  // same depth as the 2D model
    int obs_len = 8;
    int pred_len = 12;

    void validate() const;
    int social_len() const { return social_feature_len(social); }
    std::string display_name() const;
};

template <class Real>
class ParamStore {
public:
    struct Entry {
        std::string name;
        NdArray<Real> value;
        bool trainable = true;
    };

    NdArray<Real>& add(const std::string& name, std::vector<int64_t> shape, bool trainable) {
        if (index_.count(name)) throw ContractError("ParamStore: duplicate name " + name);
        Entry e;
        e.name = name;
        e.value = NdArray<Real>::zeros(std::move(shape));
        e.value.requires_grad = trainable;
        e.trainable = trainable;
        index_[name] = entries.size();
        entries.push_back(std::move(e));
        return entries.back().value;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    NdArray<Real>& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("ParamStore: unknown name " + name);
        return entries[it->second].value;
    }
    const NdArray<Real>& at(const std::string& name) const {
        return const_cast<ParamStore*>(this)->at(name);
    }

    int64_t trainable_count() const {
        int64_t n = 0;
        for (const auto& e : entries)
            if (e.trainable) n += e.value.numel();
        return n;
    }

    std::vector<Entry> entries;

private:
    std::unordered_map<std::string, size_t> index_;
};

// Parameters initialized with fan-in-scaled uniform weights (bound sqrt(1/fan_in)),
// zero biases, batch-norm gamma 1 / beta 0. Deterministic for a given seed.
template <class Real>
ParamStore<Real> build_model(const ModelSpec& spec, uint64_t seed);

template <class Real>
struct Batch {
    NdArray<Real> obs;     // B x obs_len x 2, normalized frame
    NdArray<Real> social;  // B x obs_len x S; empty when social is off
    NdArray<Real> target;  // B x pred_len x 2, normalized-frame positions
};

template <class Real>
struct ForwardResult {
    NodeId pred = -1;                 // B x pred_len x 2
    std::vector<NodeId> param_leaves;  // aligned with store.entries
    NodeId encoder_final_h = -1;       // EncDec wiring introspection
    NodeId encoder_final_c = -1;
    NodeId decoder_initial_h = -1;
    NodeId decoder_initial_c = -1;
};

// Builds the forward graph for the requested family on the given tape. In train
// mode batch-norm uses batch statistics and updates the store's running stats.
template <class Real>
ForwardResult<Real> model_forward(Tape<Real>& tape, const ModelSpec& spec,
                                  ParamStore<Real>& store, const Batch<Real>& batch, bool train);

// Social fusion: the social vector goes through its own fully connected layer
// and is summed onto the position embedding.
template <class Real>
NodeId fuse_social(Tape<Real>& tape, NodeId pos_embed, NodeId social_vec, NodeId w, NodeId b) {
    return tape.add(pos_embed, tape.fc(social_vec, w, b));
}

// Mean Euclidean distance between prediction and target positions. When the
// model emits displacements (rel mode) they are summed into positions first.
template <class Real>
NodeId ade_loss(Tape<Real>& tape, NodeId pred, NodeId target, bool pred_is_displacement) {
    NodeId p = pred_is_displacement ? tape.cumsum_time(pred) : pred;
    const NodeId d = tape.sub(p, target);
    const NodeId sq = tape.sum_last(tape.mul(d, d));
    return tape.mean_all(tape.sqrt_eps(sq, Real(1e-12)));
}

// ---- implementation --------------------------------------------------------

template <class Real>
ParamStore<Real> build_model(const ModelSpec& spec, uint64_t seed) {
    spec.validate();
    ParamStore<Real> store;
    RngStream rng(stream_seed(seed, 0x6d6f64656cull));  // one stream, insertion order

    auto uniform_fill = [&](NdArray<Real>& a, int64_t fan_in) {
        const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
        for (auto& v : a.data) v = static_cast<Real>(rng.uniform(-bound, bound));
    };
    auto add_fc = [&](const std::string& name, int64_t dout, int64_t din) {
        uniform_fill(store.add(name + ".w", {dout, din}, true), din);
        store.add(name + ".b", {dout}, true);  // zero bias
    };
    auto add_bn = [&](const std::string& name, int64_t c) {
        auto& gamma = store.add(name + ".gamma", {c}, true);
        std::fill(gamma.data.begin(), gamma.data.end(), Real(1));
        store.add(name + ".beta", {c}, true);
        store.add(name + ".mean", {c}, false);
        auto& var = store.add(name + ".var", {c}, false);
        std::fill(var.data.begin(), var.data.end(), Real(1));
    };
    auto add_lstm = [&](const std::string& name, int64_t din, int64_t h) {
        uniform_fill(store.add(name + ".wx", {4 * h, din}, true), din);
        uniform_fill(store.add(name + ".wh", {4 * h, h}, true), h);
        store.add(name + ".b", {4 * h}, true);
    };

    const int E = spec.embed_dim;
    const int S = spec.social_len();
    switch (spec.family) {
        case ModelFamily::Conv2d: {
            add_fc("embed", E, 2);
            if (S > 0) add_fc("social", E, S);
            if (spec.positional_embedding)
                uniform_fill(store.add("pos_embed", {spec.obs_len, E}, true), E);
            const int ks = spec.kernel_size;
            for (size_t i = 0; i < spec.conv2d_channels.size(); ++i) {
                const auto [ci, co] = spec.conv2d_channels[i];
                uniform_fill(store.add("conv" + std::to_string(i) + ".w", {co, ci, ks, ks}, true),
                             static_cast<int64_t>(ci) * ks * ks);
                store.add("conv" + std::to_string(i) + ".b", {co}, true);
                add_bn("bn" + std::to_string(i), co);
            }
            const int shrink = spec.symmetric_time_padding ? 4 : 0;
            add_fc("head", 2, E - shrink);
            break;
        }
        case ModelFamily::Conv1d: {
            add_fc("embed", E, 2);
            if (S > 0) add_fc("social", E, S);
            if (spec.positional_embedding)
                uniform_fill(store.add("pos_embed", {spec.obs_len, E}, true), E);
            const int ks = spec.kernel_size;
            const int C = spec.conv1d_channels;
            const int tstage = spec.conv1d_layers - 4;  // the time-resizing stage
            for (int i = 0; i < spec.conv1d_layers; ++i) {
                if (spec.transpose_conv && i == tstage) {
                    // one transpose conv replaces the upsample and both reducing convs
                    const int kt = spec.pred_len - spec.obs_len + 1;
                    uniform_fill(store.add("tconv.w", {C, C, kt}, true),
                                 static_cast<int64_t>(C) * kt);
                    store.add("tconv.b", {C}, true);
                    continue;
                }
                if (spec.transpose_conv && i == tstage + 1) continue;
                uniform_fill(store.add("conv" + std::to_string(i) + ".w", {C, C, ks}, true),
                             static_cast<int64_t>(C) * ks);
                store.add("conv" + std::to_string(i) + ".b", {C}, true);
            }
            add_fc("head", 2, C);
            break;
        }
        case ModelFamily::Lstm: {
            add_fc("embed", E, 2);
            if (S > 0) add_fc("social", E, S);
            add_lstm("lstm", E, spec.lstm_hidden);
            add_fc("out1", E, spec.lstm_hidden);
            add_fc("out2", 2, E);
            break;
        }
        case ModelFamily::EncDec: {
            add_fc("enc.embed", E, 2);
            if (S > 0) add_fc("enc.social", E, S);
            add_lstm("enc.lstm", E, spec.lstm_hidden);
            add_fc("dec.embed", E, 2);
            add_lstm("dec.lstm", E, spec.lstm_hidden);
            add_fc("dec.out1", E, spec.lstm_hidden);
            add_fc("dec.out2", 2, E);
            break;
        }
    }
    return store;
}

namespace detail {

template <class Real>
struct Staged {
    std::vector<NodeId> leaves;
    std::unordered_map<std::string, NodeId> by_name;
    NodeId operator()(const std::string& name) const {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ContractError("model_forward: missing parameter " + name);
        return it->second;
    }
};

template <class Real>
Staged<Real> stage_params(Tape<Real>& tape, const ParamStore<Real>& store) {
    Staged<Real> st;
    st.leaves.reserve(store.entries.size());
    for (const auto& e : store.entries) {
        const NodeId id = tape.leaf(e.value);
        st.leaves.push_back(id);
        st.by_name[e.name] = id;
    }
    return st;
}

// one B x 2 leaf per observed step, sliced out of the batch tensor
template <class Real>
std::vector<NodeId> step_leaves(Tape<Real>& tape, const NdArray<Real>& obs) {
    const int64_t B = obs.dim(0), T = obs.dim(1), F = obs.dim(2);
    std::vector<NodeId> out;
    out.reserve(static_cast<size_t>(T));
    for (int64_t t = 0; t < T; ++t) {
        NdArray<Real> step = NdArray<Real>::zeros({B, F});
        for (int64_t b = 0; b < B; ++b)
            for (int64_t f = 0; f < F; ++f) step.data[b * F + f] = obs.data[(b * T + t) * F + f];
        out.push_back(tape.leaf(std::move(step)));
    }
    return out;
}

}  // namespace detail

template <class Real>
ForwardResult<Real> model_forward(Tape<Real>& tape, const ModelSpec& spec,
                                  ParamStore<Real>& store, const Batch<Real>& batch, bool train) {
    spec.validate();
    const auto& obs = batch.obs;
    if (obs.ndim() != 3 || obs.dim(1) != spec.obs_len || obs.dim(2) != 2)
        throw DimensionError("model_forward: observations " + shape_str(obs.shape) + " expected (B," +
                             std::to_string(spec.obs_len) + ",2)");
    const int S = spec.social_len();
    if (S > 0 && (batch.social.ndim() != 3 || batch.social.dim(0) != obs.dim(0) ||
                  batch.social.dim(1) != spec.obs_len || batch.social.dim(2) != S))
        throw DimensionError("model_forward: social input " + shape_str(batch.social.shape) +
                             " expected (B," + std::to_string(spec.obs_len) + "," +
                             std::to_string(S) + ")");

    ForwardResult<Real> res;
    auto staged = detail::stage_params(tape, store);
    res.param_leaves = staged.leaves;

    const int64_t B = obs.dim(0);
    const int E = spec.embed_dim;
    const int H = spec.lstm_hidden;

    auto bn_apply = [&](NodeId x, int i) {
        const std::string p = "bn" + std::to_string(i);
        return tape.batchnorm(x, staged(p + ".gamma"), staged(p + ".beta"),
                              store.at(p + ".mean").data.data(), store.at(p + ".var").data.data(),
                              train, Real(1e-5), Real(0.1));
    };

    switch (spec.family) {
        case ModelFamily::Conv2d:
        case ModelFamily::Conv1d: {
            NodeId x = tape.leaf(batch.obs);
            NodeId emb = tape.fc(x, staged("embed.w"), staged("embed.b"));  // B x T x E
            if (S > 0) {
                NodeId soc = tape.leaf(batch.social);
                emb = fuse_social(tape, emb, soc, staged("social.w"), staged("social.b"));
            }
            if (spec.positional_embedding) emb = tape.add_rows(emb, staged("pos_embed"));
            NodeId cur = tape.transpose_last2(emb);  // B x E x T

            const int ks = spec.kernel_size;
            if (spec.family == ModelFamily::Conv2d) {
                cur = tape.reshape(cur, {B, 1, E, spec.obs_len});
                const int n = static_cast<int>(spec.conv2d_channels.size());
                const int64_t pf = (ks - 1) / 2;
                const int64_t pt_mid = (ks - 3) / 2;
                const int64_t pf_mid = spec.symmetric_time_padding ? pt_mid : pf;
                for (int i = 0; i < n; ++i) {
                    if (i == n - 4) cur = tape.upsample2x_time(cur);
                    const bool mid = i >= n - 4 && i < n - 2;
                    const std::string p = "conv" + std::to_string(i);
                    cur = tape.conv2d(cur, staged(p + ".w"), staged(p + ".b"), mid ? pf_mid : pf,
                                      mid ? pt_mid : pf);
                    cur = bn_apply(cur, i);
                    if (i != n - 1) cur = tape.relu(cur);
                }
                const int64_t Hf = tape.value(cur).dim(2);
                cur = tape.reshape(cur, {B, Hf, static_cast<int64_t>(spec.pred_len)});
            } else {
                const int n = spec.conv1d_layers;
                const int64_t pf = (ks - 1) / 2;
                const int64_t pt = (ks - 3) / 2;
                const int tstage = n - 4;  // upsample (or tconv) goes before this layer index
                for (int i = 0; i < n; ++i) {
                    if (spec.transpose_conv && i == tstage) {
                        // replaces the upsample and both time-reducing convs
                        cur = tape.tconv1d(cur, staged("tconv.w"), staged("tconv.b"), 1, 0);
                        cur = tape.relu(cur);
                        continue;
                    }
                    if (spec.transpose_conv && i == tstage + 1) continue;
                    if (!spec.transpose_conv && i == tstage) cur = tape.upsample2x_time(cur);
                    const bool mid = !spec.transpose_conv && i >= tstage && i < n - 2;
                    const std::string p = "conv" + std::to_string(i);
                    const bool last = i == n - 1;
                    NodeId y = tape.conv1d(cur, staged(p + ".w"), staged(p + ".b"), mid ? pt : pf);
                    if (!last) y = tape.relu(y);
                    // identity-plus-conv where the conv preserves the shape
                    if (spec.residual && tape.value(y).shape == tape.value(cur).shape)
                        y = tape.add(cur, y);
                    cur = y;
                }
            }
            cur = tape.transpose_last2(cur);  // B x pred_len x features
            res.pred = tape.fc(cur, staged("head.w"), staged("head.b"));
            break;
        }
        case ModelFamily::Lstm: {
            auto obs_steps = detail::step_leaves(tape, batch.obs);
            std::vector<NodeId> social_steps;
            if (S > 0) social_steps = detail::step_leaves(tape, batch.social);
            NodeId h = tape.leaf(NdArray<Real>::zeros({B, H}));
            NodeId c = tape.leaf(NdArray<Real>::zeros({B, H}));
            std::vector<NodeId> preds;
            NodeId feedback = -1;
            const int total_steps = spec.obs_len + spec.pred_len - 1;
            for (int t = 0; t < total_steps; ++t) {
                NodeId x = t < spec.obs_len ? obs_steps[static_cast<size_t>(t)] : feedback;
                NodeId e = tape.fc(x, staged("embed.w"), staged("embed.b"));
                if (S > 0 && t < spec.obs_len)
                    e = fuse_social(tape, e, social_steps[static_cast<size_t>(t)],
                                    staged("social.w"), staged("social.b"));
                auto hc = lstm_step(tape, e, h, c, staged("lstm.wx"), staged("lstm.wh"),
                                    staged("lstm.b"));
                h = hc.h;
                c = hc.c;
                if (t >= spec.obs_len - 1) {
                    NodeId o = tape.fc(h, staged("out1.w"), staged("out1.b"));
                    o = tape.fc(o, staged("out2.w"), staged("out2.b"));
                    preds.push_back(o);
                    feedback = o;
                }
            }
            res.pred = tape.stack_axis1(preds);
            break;
        }
        case ModelFamily::EncDec: {
            auto obs_steps = detail::step_leaves(tape, batch.obs);
            std::vector<NodeId> social_steps;
            if (S > 0) social_steps = detail::step_leaves(tape, batch.social);
            NodeId h = tape.leaf(NdArray<Real>::zeros({B, H}));
            NodeId c = tape.leaf(NdArray<Real>::zeros({B, H}));
            for (int t = 0; t < spec.obs_len; ++t) {
                NodeId e = tape.fc(obs_steps[static_cast<size_t>(t)], staged("enc.embed.w"),
                                   staged("enc.embed.b"));
                if (S > 0)
                    e = fuse_social(tape, e, social_steps[static_cast<size_t>(t)],
                                    staged("enc.social.w"), staged("enc.social.b"));
                auto hc = lstm_step(tape, e, h, c, staged("enc.lstm.wx"), staged("enc.lstm.wh"),
                                    staged("enc.lstm.b"));
                h = hc.h;
                c = hc.c;
            }
            res.encoder_final_h = h;
            res.encoder_final_c = c;
            res.decoder_initial_h = h;  // decoder starts from the encoder state
            res.decoder_initial_c = c;
            NodeId x = obs_steps.back();  // decoder consumes positions only
            std::vector<NodeId> preds;
            for (int t = 0; t < spec.pred_len; ++t) {
                NodeId e = tape.fc(x, staged("dec.embed.w"), staged("dec.embed.b"));
                auto hc = lstm_step(tape, e, h, c, staged("dec.lstm.wx"), staged("dec.lstm.wh"),
                                    staged("dec.lstm.b"));
                h = hc.h;
                c = hc.c;
                NodeId o = tape.fc(h, staged("dec.out1.w"), staged("dec.out1.b"));
                o = tape.fc(o, staged("dec.out2.w"), staged("dec.out2.b"));
                preds.push_back(o);
                x = o;
            }
            res.pred = tape.stack_axis1(preds);
            break;
        }
    }
    return res;
}

}  // namespace traj
