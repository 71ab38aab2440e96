#include "trajcast/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace traj {

const std::string* ConfigDoc::find(const std::string& section, const std::string& key) const {
    for (const auto& [name, entries] : sections) {
        if (name != section) continue;
        for (const auto& [k, v] : entries)
            if (k == key) return &v;
    }
    return nullptr;
}

void ConfigDoc::set(const std::string& section, const std::string& key, const std::string& value) {
    for (auto& [name, entries] : sections) {
        if (name != section) continue;
        for (auto& [k, v] : entries)
            if (k == key) {
                v = value;
                return;
            }
        entries.push_back({key, value});
        return;
    }
    sections.push_back({section, {{key, value}}});
}

namespace {

std::string trim(std::string_view s) {
    size_t a = 0, b = s.size();
    while (a < b && (s[a] == ' ' || s[a] == '\t')) ++a;
    while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
    return std::string(s.substr(a, b - a));
}

}  // namespace

ConfigDoc parse_config(std::string_view text) {
    ConfigDoc doc;
    std::string section;
    size_t pos = 0;
    int64_t line_no = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string line = trim(text.substr(pos, eol - pos));
        pos = eol + 1;
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ParseError("config line " + std::to_string(line_no) + ": malformed section");
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        if (key.empty())
            throw ParseError("config line " + std::to_string(line_no) + ": empty key");
        doc.set(section, key, value);
    }
    return doc;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write file: " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
}

void TrainConfig::apply_preset(const std::string& name) {
    preset = name;
    base_lr = 0.005;
    if (name == "eth_ucy") {
        epochs = 60;
        gamma = 0.5;
        lr_step = 17;
    } else if (name == "trajnet") {
        epochs = 250;
        gamma = 0.75;
        lr_step = 35;
    } else {
        throw ConfigError("unknown preset '" + name + "' (expected eth_ucy|trajnet)");
    }
}

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config: " + key + " must be a boolean, got '" + v + "'");
}

int64_t parse_int(const std::string& v, const std::string& key) {
    int64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError("config: " + key + " must be an integer, got '" + v + "'");
    return out;
}

double parse_real(const std::string& v, const std::string& key) {
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError("config: " + key + " must be a number, got '" + v + "'");
    return out;
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (c == ',' || c == ' ' || c == '\t') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

TrainConfig resolve_config(const ConfigDoc& doc) {
    TrainConfig cfg;
    if (const auto* v = doc.find("train", "preset")) cfg.apply_preset(*v);
    else cfg.apply_preset("eth_ucy");

    // [data]: scene.<id> = <path> [frame_step] [unlabeled]
    for (const auto& [name, entries] : doc.sections) {
        if (name != "data") continue;
        for (const auto& [k, v] : entries) {
            if (k.rfind("scene.", 0) != 0) continue;
            SceneSource s;
            s.id = k.substr(6);
            auto toks = split_list(v);
            if (toks.empty()) throw ConfigError("config: scene." + s.id + " needs a file path");
            s.path = toks[0];
            for (size_t i = 1; i < toks.size(); ++i) {
                if (toks[i] == "unlabeled")
                    s.labeled = false;
                else
                    s.frame_step = parse_int(toks[i], "scene." + s.id + " frame_step");
            }
            cfg.scenes.push_back(std::move(s));
        }
    }

    if (const auto* v = doc.find("prep", "norm_mode")) cfg.norm = norm_mode_from_string(*v);
    if (const auto* v = doc.find("prep", "augment")) {
        for (const auto& a : split_list(*v)) {
            if (a == "rotate") cfg.aug_rotate = true;
            else if (a == "mirror") cfg.aug_mirror = true;
            else if (a == "noise") cfg.aug_noise = true;
            else throw ConfigError("config: unknown augmentation '" + a + "'");
        }
    }
    if (const auto* v = doc.find("prep", "noise_sigma"))
        cfg.noise_sigma = static_cast<float>(parse_real(*v, "noise_sigma"));
    if (cfg.noise_sigma < 0.0f) throw ConfigError("config: noise_sigma must be >= 0");

    SocialConfig& soc = cfg.model.social;
    if (const auto* v = doc.find("social", "kind")) soc.kind = social_kind_from_string(*v);
    if (const auto* v = doc.find("social", "l")) soc.l = static_cast<int>(parse_int(*v, "l"));
    if (const auto* v = doc.find("social", "cell_side"))
        soc.cell_side = static_cast<float>(parse_real(*v, "cell_side"));
    if (const auto* v = doc.find("social", "c")) soc.c = static_cast<int>(parse_int(*v, "c"));
    if (const auto* v = doc.find("social", "ring_spacing"))
        soc.ring_spacing = static_cast<float>(parse_real(*v, "ring_spacing"));
    if (const auto* v = doc.find("social", "d")) soc.d = static_cast<int>(parse_int(*v, "d"));
    if (const auto* v = doc.find("social", "angular_range"))
        soc.angular_range = static_cast<float>(parse_real(*v, "angular_range"));
    if (const auto* v = doc.find("social", "binary")) soc.binary = parse_bool(*v, "binary");
    if (soc.kind != SocialKind::None) soc.validate();

    ModelSpec& m = cfg.model;
    if (const auto* v = doc.find("model", "family")) m.family = model_family_from_string(*v);
    if (const auto* v = doc.find("model", "kernel_size"))
        m.kernel_size = static_cast<int>(parse_int(*v, "kernel_size"));
    if (const auto* v = doc.find("model", "positional_embedding"))
        m.positional_embedding = parse_bool(*v, "positional_embedding");
    if (const auto* v = doc.find("model", "residual")) m.residual = parse_bool(*v, "residual");
    if (const auto* v = doc.find("model", "transpose_conv"))
        m.transpose_conv = parse_bool(*v, "transpose_conv");
    if (const auto* v = doc.find("model", "symmetric_time_padding"))
        m.symmetric_time_padding = parse_bool(*v, "symmetric_time_padding");
    if (const auto* v = doc.find("model", "embed_dim"))
        m.embed_dim = static_cast<int>(parse_int(*v, "embed_dim"));
    if (const auto* v = doc.find("model", "lstm_hidden"))
        m.lstm_hidden = static_cast<int>(parse_int(*v, "lstm_hidden"));
    if (const auto* v = doc.find("model", "conv1d_channels"))
        m.conv1d_channels = static_cast<int>(parse_int(*v, "conv1d_channels"));
    if (const auto* v = doc.find("model", "conv1d_layers"))
        m.conv1d_layers = static_cast<int>(parse_int(*v, "conv1d_layers"));
    m.validate();

    if (const auto* v = doc.find("train", "epochs"))
        cfg.epochs = static_cast<int>(parse_int(*v, "epochs"));
    if (const auto* v = doc.find("train", "base_lr")) cfg.base_lr = parse_real(*v, "base_lr");
    if (const auto* v = doc.find("train", "gamma")) cfg.gamma = parse_real(*v, "gamma");
    if (const auto* v = doc.find("train", "lr_step"))
        cfg.lr_step = static_cast<int>(parse_int(*v, "lr_step"));
    if (const auto* v = doc.find("train", "batch_size"))
        cfg.batch_size = static_cast<int>(parse_int(*v, "batch_size"));
    if (const auto* v = doc.find("train", "seed"))
        cfg.seed = static_cast<uint64_t>(parse_int(*v, "seed"));
    if (cfg.epochs < 0 || cfg.batch_size < 1 || cfg.lr_step < 1)
        throw ConfigError("config: epochs must be >= 0, batch_size and lr_step >= 1");
    return cfg;
}

std::string TrainConfig::canonical_text() const {
    std::ostringstream os;
    os << "[data]\n";
    for (const auto& s : scenes) {
        os << "scene." << s.id << " = " << s.path << " " << s.frame_step;
        if (!s.labeled) os << " unlabeled";
        os << "\n";
    }
    os << "[prep]\n";
    os << "norm_mode = " << to_string(norm) << "\n";
    os << "augment =";
    if (aug_rotate) os << " rotate";
    if (aug_mirror) os << " mirror";
    if (aug_noise) os << " noise";
    os << "\n";
    os << "noise_sigma = " << noise_sigma << "\n";
    const SocialConfig& soc = model.social;
    os << "[social]\n";
    os << "kind = " << to_string(soc.kind) << "\n";
    os << "l = " << soc.l << "\ncell_side = " << soc.cell_side << "\nc = " << soc.c
       << "\nring_spacing = " << soc.ring_spacing << "\nd = " << soc.d
       << "\nangular_range = " << soc.angular_range << "\nbinary = " << (soc.binary ? 1 : 0)
       << "\n";
    os << "[model]\n";
    os << "family = " << to_string(model.family) << "\n";
    os << "kernel_size = " << model.kernel_size << "\n";
    os << "positional_embedding = " << (model.positional_embedding ? 1 : 0) << "\n";
    os << "residual = " << (model.residual ? 1 : 0) << "\n";
    os << "transpose_conv = " << (model.transpose_conv ? 1 : 0) << "\n";
    os << "symmetric_time_padding = " << (model.symmetric_time_padding ? 1 : 0) << "\n";
    os << "embed_dim = " << model.embed_dim << "\n";
    os << "lstm_hidden = " << model.lstm_hidden << "\n";
    os << "conv1d_channels = " << model.conv1d_channels << "\n";
    os << "conv1d_layers = " << model.conv1d_layers << "\n";
    os << "[train]\n";
    os << "preset = " << preset << "\n";
    os << "epochs = " << epochs << "\n";
    os << "base_lr = " << base_lr << "\n";
    os << "gamma = " << gamma << "\n";
    os << "lr_step = " << lr_step << "\n";
    os << "batch_size = " << batch_size << "\n";
    os << "seed = " << seed << "\n";
    return os.str();
}

}  // namespace traj
