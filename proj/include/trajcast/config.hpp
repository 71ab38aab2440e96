#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trajcast/models.hpp"
#include "trajcast/prep.hpp"

namespace traj {

// Key/value document with [section] headers, '#' comments and 'key = value'
// lines. Section and key order is preserved for canonical output.
struct ConfigDoc {
    using Entries = std::vector<std::pair<std::string, std::string>>;
    std::vector<std::pair<std::string, Entries>> sections;

    const std::string* find(const std::string& section, const std::string& key) const;
    void set(const std::string& section, const std::string& key, const std::string& value);
};

ConfigDoc parse_config(std::string_view text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

struct SceneSource {
    std::string id;
    std::string path;
    int64_t frame_step = 1;
    bool labeled = true;
};

// Fully resolved run configuration: the [data]/[prep]/[social]/[model]/[train]
// sections with preset defaults materialized.
struct TrainConfig {
    std::vector<SceneSource> scenes;

    NormMode norm = NormMode::Tobs;
    bool aug_rotate = false;
    bool aug_mirror = false;
    bool aug_noise = false;
    float noise_sigma = 0.05f;

    ModelSpec model;

    std::string preset = "eth_ucy";
    int epochs = 60;
    double base_lr = 0.005;
    double gamma = 0.5;
    int lr_step = 17;
    int batch_size = 64;
    uint64_t seed = 1;

    // preset defaults: eth_ucy = 60 epochs / gamma 0.5 / step 17,
    // trajnet = 250 epochs / gamma 0.75 / step 35, both at lr 0.005
    void apply_preset(const std::string& name);

    std::string canonical_text() const;
    uint64_t fingerprint() const { return fnv1a64(canonical_text()); }
};

TrainConfig resolve_config(const ConfigDoc& doc);

}  // namespace traj
