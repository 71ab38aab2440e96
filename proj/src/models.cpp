#include "trajcast/models.hpp"

namespace traj {

ModelFamily model_family_from_string(const std::string& s) {
    if (s == "conv1d") return ModelFamily::Conv1d;
    if (s == "conv2d") return ModelFamily::Conv2d;
    if (s == "lstm") return ModelFamily::Lstm;
    if (s == "encdec") return ModelFamily::EncDec;
    throw ConfigError("unknown model family '" + s + "' (expected conv1d|conv2d|lstm|encdec)");
}

std::string to_string(ModelFamily f) {
    switch (f) {
        case ModelFamily::Conv1d: return "conv1d";
        case ModelFamily::Conv2d: return "conv2d";
        case ModelFamily::Lstm: return "lstm";
        case ModelFamily::EncDec: return "encdec";
    }
    return "?";
}

void ModelSpec::validate() const {
    if (kernel_size != 3 && kernel_size != 5 && kernel_size != 7)
        throw ConfigError("model: kernel_size must be 3, 5 or 7, got " +
                          std::to_string(kernel_size));
    if (embed_dim < 1 || lstm_hidden < 1 || obs_len < 2 || pred_len < 1)
        throw ConfigError("model: dimensions must be positive");
    const bool conv = family == ModelFamily::Conv1d || family == ModelFamily::Conv2d;
    if (!conv && (positional_embedding || residual || transpose_conv || symmetric_time_padding))
        throw ConfigError("model: variant flags are only valid for conv families");
    if (family == ModelFamily::Conv2d) {
        const auto& ch = conv2d_channels;
        if (ch.size() < 5)
            throw ConfigError("model: conv2d channel schedule needs at least 5 layers, got " +
                              std::to_string(ch.size()));
        if (ch.front().first != 1 || ch.back().second != 1)
            throw ConfigError("model: conv2d schedule must start with 1 input channel and end "
                              "with 1 output channel");
        for (size_t i = 0; i + 1 < ch.size(); ++i)
            if (ch[i].second != ch[i + 1].first)
                throw ConfigError("model: conv2d schedule breaks at layer " + std::to_string(i) +
                                  " (" + std::to_string(ch[i].second) +
                                  " != " + std::to_string(ch[i + 1].first) + ")");
        for (const auto& [ci, co] : ch)
            if (ci < 1 || co < 1) throw ConfigError("model: conv2d channel counts must be positive");
    }
    if (conv && pred_len != 2 * obs_len - 4 && !transpose_conv)
        throw ConfigError("model: the upsample pipeline requires pred_len == 2*obs_len - 4 (got " +
                          std::to_string(obs_len) + " -> " + std::to_string(pred_len) + ")");
    if (family == ModelFamily::Conv1d && conv1d_layers < 5)
        throw ConfigError("model: conv1d needs at least 5 layers, got " +
                          std::to_string(conv1d_layers));
    if (social.kind != SocialKind::None) social.validate();
}

std::string ModelSpec::display_name() const {
    std::string name;
    switch (family) {
        case ModelFamily::Conv1d: name = "Conv1D-Ks" + std::to_string(kernel_size); break;
        case ModelFamily::Conv2d: name = "Conv2D-Ks" + std::to_string(kernel_size); break;
        case ModelFamily::Lstm: name = "LSTM"; break;
        case ModelFamily::EncDec: name = "EncDec"; break;
    }
    if (positional_embedding) name += "+Pe";
    if (residual) name += "+Rc";
    if (transpose_conv) name += "+Tc";
    switch (social.kind) {
        case SocialKind::SquareGrid: name += "+Sog"; break;
        case SocialKind::CircularMap: name += "+Com"; break;
        case SocialKind::AngularGrid: name += "+Apg"; break;
        case SocialKind::None: break;
    }
    return name;
}

}  // namespace traj
