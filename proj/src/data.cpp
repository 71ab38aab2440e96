#include "trajcast/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace traj {

namespace {

bool parse_double(std::string_view tok, double& out) {
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

bool parse_integral(std::string_view tok, int64_t& out) {
    double v = 0.0;
    if (!parse_double(tok, v)) return false;
    if (v != std::floor(v) || std::abs(v) > 9e15) return false;
    out = static_cast<int64_t>(v);
    return true;
}

}  // namespace

TrackTable parse_track_file(std::string_view text, std::string scene_id) {
    TrackTable table;
    table.scene_id = std::move(scene_id);
    size_t pos = 0;
    int64_t line_no = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        std::string_view toks[4];
        int ntok = 0;
        size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
            if (i >= line.size()) break;
            size_t j = i;
            while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
            if (ntok < 4) toks[ntok] = line.substr(i, j - i);
            ++ntok;
            i = j;
        }
        if (ntok == 0) continue;  // blank line
        if (ntok != 4)
            throw ParseError(table.scene_id + ": line " + std::to_string(line_no) + ": expected 4 fields, got " +
                             std::to_string(ntok));
        TrackRecord r;
        if (!parse_integral(toks[0], r.frame))
            throw ParseError(table.scene_id + ": line " + std::to_string(line_no) +
                             ": bad frame id '" + std::string(toks[0]) + "'");
        if (!parse_integral(toks[1], r.ped))
            throw ParseError(table.scene_id + ": line " + std::to_string(line_no) +
                             ": bad pedestrian id '" + std::string(toks[1]) + "'");
        if (!parse_double(toks[2], r.x) || !parse_double(toks[3], r.y))
            throw ParseError(table.scene_id + ": line " + std::to_string(line_no) +
                             ": bad coordinate");
        table.records.push_back(r);
    }
    std::sort(table.records.begin(), table.records.end(), [](const TrackRecord& a, const TrackRecord& b) {
        return a.ped != b.ped ? a.ped < b.ped : a.frame < b.frame;
    });
    for (size_t k = 1; k < table.records.size(); ++k) {
        const auto& a = table.records[k - 1];
        const auto& b = table.records[k];
        if (a.ped == b.ped && a.frame == b.frame)
            throw ParseError(table.scene_id + ": duplicate record for pedestrian " +
                             std::to_string(b.ped) + " at frame " + std::to_string(b.frame));
    }
    return table;
}

std::string serialize_track_table(const TrackTable& t) {
    std::string out;
    char buf[128];
    for (const auto& r : t.records) {
        std::snprintf(buf, sizeof(buf), "%lld %lld %.17g %.17g\n", static_cast<long long>(r.frame),
                      static_cast<long long>(r.ped), r.x, r.y);
        out += buf;
    }
    return out;
}

std::vector<Sample> window_samples(const TrackTable& table, int obs_len, int pred_len, int stride) {
    if (obs_len < 1 || pred_len < 0 || stride < 1)
        throw ConfigError("window_samples: obs_len and stride must be >= 1");
    const int total = table.labeled ? obs_len + pred_len : obs_len;

    // frame -> (ped, position) index for neighbor lookups
    std::unordered_map<int64_t, std::vector<std::pair<int64_t, Vec2>>> by_frame;
    std::map<int64_t, std::vector<TrackRecord>> by_ped;
    for (const auto& r : table.records) {
        by_frame[r.frame].push_back({r.ped, Vec2{static_cast<float>(r.x), static_cast<float>(r.y)}});
        by_ped[r.ped].push_back(r);
    }

    std::vector<Sample> samples;
    for (const auto& [ped, recs] : by_ped) {
        // split this pedestrian's records into runs of consecutive annotated frames
        size_t run_start = 0;
        for (size_t i = 1; i <= recs.size(); ++i) {
            const bool brk =
                i == recs.size() || recs[i].frame - recs[i - 1].frame != table.frame_step;
            if (!brk) continue;
            const int64_t run_len = static_cast<int64_t>(i - run_start);
            for (int64_t w = 0; w + total <= run_len; w += stride) {
                const size_t base = run_start + static_cast<size_t>(w);
                Sample s;
                s.scene_id = table.scene_id;
                s.ped_id = ped;
                s.first_frame = recs[base].frame;
                s.labeled = table.labeled;
                s.obs.reserve(static_cast<size_t>(obs_len));
                s.neighbors.resize(static_cast<size_t>(obs_len));
                for (int t = 0; t < obs_len; ++t) {
                    const auto& r = recs[base + static_cast<size_t>(t)];
                    s.obs.push_back(Vec2{static_cast<float>(r.x), static_cast<float>(r.y)});
                    for (const auto& [other, p] : by_frame[r.frame])
                        if (other != ped) s.neighbors[static_cast<size_t>(t)].push_back(p);
                }
                if (table.labeled) {
                    s.future.reserve(static_cast<size_t>(pred_len));
                    for (int t = obs_len; t < total; ++t) {
                        const auto& r = recs[base + static_cast<size_t>(t)];
                        s.future.push_back(Vec2{static_cast<float>(r.x), static_cast<float>(r.y)});
                    }
                }
                samples.push_back(std::move(s));
            }
            run_start = i;
        }
    }
    return samples;
}

FoldPlan leave_one_out_folds(const std::vector<std::string>& scene_ids) {
    if (scene_ids.size() < 2)
        throw ConfigError("leave_one_out_folds: need at least 2 scenes, got " +
                          std::to_string(scene_ids.size()));
    FoldPlan plan;
    for (size_t i = 0; i < scene_ids.size(); ++i) {
        FoldPlan::Fold f;
        f.test_scene = scene_ids[i];
        for (size_t j = 0; j < scene_ids.size(); ++j)
            if (j != i) f.train_scenes.push_back(scene_ids[j]);
        plan.folds.push_back(std::move(f));
    }
    return plan;
}

namespace {

constexpr uint32_t kCacheMagic = 0x544a5343;  // "TJSC"
constexpr uint32_t kCacheVersion = 1;

template <class T>
void put(std::string& buf, const T& v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_str(std::string& buf, const std::string& s) {
    put(buf, static_cast<uint32_t>(s.size()));
    buf.append(s);
}

struct Cursor {
    const char* p;
    const char* end;
    size_t off(const char* base) const { return static_cast<size_t>(p - base); }
    template <class T>
    T get(const char* base) {
        if (p + sizeof(T) > end)
            throw CorruptionError("sample cache truncated at offset " + std::to_string(off(base)));
        T v;
        std::memcpy(&v, p, sizeof(T));
        p += sizeof(T);
        return v;
    }
    std::string get_str(const char* base) {
        const uint32_t n = get<uint32_t>(base);
        if (p + n > end)
            throw CorruptionError("sample cache truncated at offset " + std::to_string(off(base)));
        std::string s(p, p + n);
        p += n;
        return s;
    }
};

}  // namespace

void save_sample_cache(const std::vector<Sample>& samples, const std::string& path) {
    std::string buf;
    put(buf, kCacheMagic);
    put(buf, kCacheVersion);
    put(buf, static_cast<uint64_t>(samples.size()));
    for (const auto& s : samples) {
        put_str(buf, s.scene_id);
        put(buf, s.ped_id);
        put(buf, s.first_frame);
        put(buf, static_cast<uint8_t>(s.labeled));
        put(buf, static_cast<uint32_t>(s.obs.size()));
        for (Vec2 v : s.obs) {
            put(buf, v.x);
            put(buf, v.y);
        }
        put(buf, static_cast<uint32_t>(s.future.size()));
        for (Vec2 v : s.future) {
            put(buf, v.x);
            put(buf, v.y);
        }
        put(buf, static_cast<uint32_t>(s.neighbors.size()));
        for (const auto& frame : s.neighbors) {
            put(buf, static_cast<uint32_t>(frame.size()));
            for (Vec2 v : frame) {
                put(buf, v.x);
                put(buf, v.y);
            }
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write sample cache: " + path);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::vector<Sample> load_sample_cache(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read sample cache: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string buf = ss.str();
    Cursor c{buf.data(), buf.data() + buf.size()};
    const char* base = buf.data();
    if (c.get<uint32_t>(base) != kCacheMagic) throw CorruptionError("not a sample cache: " + path);
    const uint32_t version = c.get<uint32_t>(base);
    if (version > kCacheVersion)
        throw VersionError("sample cache version " + std::to_string(version) +
                           " is newer than supported " + std::to_string(kCacheVersion));
    const uint64_t count = c.get<uint64_t>(base);
    std::vector<Sample> samples;
    samples.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        Sample s;
        s.scene_id = c.get_str(base);
        s.ped_id = c.get<int64_t>(base);
        s.first_frame = c.get<int64_t>(base);
        s.labeled = c.get<uint8_t>(base) != 0;
        const uint32_t n_obs = c.get<uint32_t>(base);
        s.obs.resize(n_obs);
        for (auto& v : s.obs) {
            v.x = c.get<float>(base);
            v.y = c.get<float>(base);
        }
        const uint32_t n_fut = c.get<uint32_t>(base);
        s.future.resize(n_fut);
        for (auto& v : s.future) {
            v.x = c.get<float>(base);
            v.y = c.get<float>(base);
        }
        const uint32_t n_frames = c.get<uint32_t>(base);
        s.neighbors.resize(n_frames);
        for (auto& frame : s.neighbors) {
            const uint32_t n = c.get<uint32_t>(base);
            frame.resize(n);
            for (auto& v : frame) {
                v.x = c.get<float>(base);
                v.y = c.get<float>(base);
            }
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace traj
