#include "ssrad/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ssrad/error.hpp"
#include "ssrad/rng.hpp"

namespace ssrad {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "volume/checkpoint payloads are little-endian; big-endian hosts need a swap pass");

namespace {

void write_floats(std::ostream& os, const std::vector<float>& v) {
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(float)));
}

void write_bytes(std::ostream& os, const std::vector<uint8_t>& v) {
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size()));
}

std::string read_header_line(std::istream& is, const std::string& path) {
    std::string line;
    if (!std::getline(is, line))
        throw DataError("cannot read header line from " + path);
    return line;
}

}  // namespace

// ---------------------------------------------------------------------------
// volume I/O
// ---------------------------------------------------------------------------

void save_volume(const std::string& path, const Volume& v) {
    if (v.intensity.size() != v.voxels())
        throw DataError("volume intensity buffer does not match extents");
    if (v.has_mask() && v.mask.size() != v.voxels())
        throw DataError("volume mask buffer does not match extents");
    json j;
    j["format"] = "ssrad-volume";
    j["version"] = 1;
    j["extent"] = {v.d, v.h, v.w};
    j["has_mask"] = v.has_mask();
    j["label"] = v.label;
    j["source_id"] = v.source_id;
    j["rescaled"] = v.rescaled;
    j["rescale_degenerate"] = v.rescale_degenerate;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path + " for writing");
    os << j.dump() << "\n";
    write_floats(os, v.intensity);
    if (v.has_mask()) write_bytes(os, v.mask);
    if (!os) throw DataError("write failed for " + path);
}

Volume load_volume(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open volume file " + path);
    json j;
    try {
        j = json::parse(read_header_line(is, path));
    } catch (const json::exception& e) {
        throw DataError("bad volume header in " + path + ": " + e.what());
    }
    if (j.value("format", "") != "ssrad-volume")
        throw DataError("not a volume file: " + path);
    if (j.value("version", -1) != 1)
        throw DataError("unsupported volume format version " +
                        std::to_string(j.value("version", -1)) + " in " + path);

    Volume v;
    auto ext = j.at("extent");
    v.d = ext.at(0).get<int>();
    v.h = ext.at(1).get<int>();
    v.w = ext.at(2).get<int>();
    if (v.d <= 0 || v.h <= 0 || v.w <= 0) throw DataError("non-positive extent in " + path);
    v.label = j.at("label").get<int>();
    v.source_id = j.value("source_id", "");
    v.rescaled = j.value("rescaled", false);
    v.rescale_degenerate = j.value("rescale_degenerate", false);
    const bool has_mask = j.at("has_mask").get<bool>();

    const auto header_end = is.tellg();
    is.seekg(0, std::ios::end);
    const auto file_end = is.tellg();
    is.seekg(header_end);
    const size_t remaining = static_cast<size_t>(file_end - header_end);

    const size_t n = v.voxels();
    const size_t intensity_bytes = n * sizeof(float);
    if (remaining < intensity_bytes)
        throw DataError("volume payload size disagreement in " + path + ": header promises " +
                        std::to_string(intensity_bytes) + " intensity bytes, file has " +
                        std::to_string(remaining));
    v.intensity.resize(n);
    is.read(reinterpret_cast<char*>(v.intensity.data()),
            static_cast<std::streamsize>(intensity_bytes));

    size_t after = remaining - intensity_bytes;
    if (has_mask) {
        if (after < n)
            throw DataError("truncated mask payload in " + path + ": expected " +
                            std::to_string(n) + " mask bytes, found " + std::to_string(after));
        v.mask.resize(n);
        is.read(reinterpret_cast<char*>(v.mask.data()), static_cast<std::streamsize>(n));
        after -= n;
    }
    if (after != 0)
        throw DataError("volume payload size disagreement in " + path + ": " +
                        std::to_string(after) + " trailing bytes");
    if (!is) throw DataError("read failed for " + path);
    return v;
}

Volume rescale_intensity(const Volume& v, float lo, float hi) {
    if (!(hi > lo)) throw ConfigError("rescale: hi must exceed lo");
    if (v.intensity.empty()) throw DataError("rescale: empty volume");
    Volume out = v;
    const auto [mn_it, mx_it] = std::minmax_element(v.intensity.begin(), v.intensity.end());
    const float mn = *mn_it, mx = *mx_it;
    if (mn == mx) {
        std::fill(out.intensity.begin(), out.intensity.end(), lo);
        out.rescale_degenerate = true;
    } else {
        const float scale = (hi - lo) / (mx - mn);
        for (float& x : out.intensity) x = lo + (x - mn) * scale;
        out.rescale_degenerate = false;
    }
    out.rescaled = true;
    return out;
}

// ---------------------------------------------------------------------------
// manifests
// ---------------------------------------------------------------------------

void save_manifest(const std::string& path, const DatasetManifest& m) {
    json j;
    j["format"] = "ssrad-manifest";
    j["version"] = m.version;
    j["seed"] = m.seed;
    json classes = json::array();
    for (size_t c = 0; c < m.class_counts.size(); ++c)
        classes.push_back({{"label", c}, {"count", m.class_counts[c]}});
    j["classes"] = classes;
    json samples = json::array();
    for (const auto& s : m.samples)
        samples.push_back(
            {{"id", s.id}, {"path", s.path}, {"label", s.label}, {"class_name", s.class_name}});
    j["samples"] = samples;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path + " for writing");
    os << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open manifest " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw DataError("bad manifest " + path + ": " + e.what());
    }
    if (j.value("format", "") != "ssrad-manifest") throw DataError("not a manifest: " + path);
    if (j.value("version", -1) != 1)
        throw DataError("unsupported manifest version in " + path);
    DatasetManifest m;
    m.seed = j.value("seed", uint64_t{0});
    m.dir = fs::path(path).parent_path().string();
    std::set<std::string> ids;
    for (const auto& s : j.at("samples")) {
        ManifestEntry e;
        e.id = s.at("id").get<std::string>();
        e.path = s.at("path").get<std::string>();
        e.label = s.at("label").get<int>();
        e.class_name = s.value("class_name", "");
        if (!ids.insert(e.id).second) throw DataError("duplicate sample id " + e.id);
        if (e.label < 0) throw DataError("negative label for sample " + e.id);
        m.samples.push_back(std::move(e));
    }
    int max_label = -1;
    for (const auto& s : m.samples) max_label = std::max(max_label, s.label);
    m.class_counts.assign(static_cast<size_t>(max_label + 1), 0);
    for (const auto& s : m.samples) m.class_counts[static_cast<size_t>(s.label)]++;
    for (const auto& s : m.samples) {
        fs::path p = fs::path(m.dir) / s.path;
        if (!fs::exists(p)) throw DataError("manifest entry " + s.id + " points to missing file " +
                                            p.string());
    }
    return m;
}

std::vector<Volume> load_dataset(const DatasetManifest& m) {
    std::vector<Volume> out;
    out.reserve(m.samples.size());
    for (const auto& s : m.samples) {
        Volume v = load_volume((fs::path(m.dir) / s.path).string());
        v.label = s.label;
        v.source_id = s.id;
        out.push_back(std::move(v));
    }
    return out;
}

// ---------------------------------------------------------------------------
// synthetic phantoms
// ---------------------------------------------------------------------------

std::vector<int> ratio_counts(const std::vector<int>& ratio, int count) {
    if (ratio.empty()) throw ConfigError("empty class ratio");
    for (int r : ratio)
        if (r <= 0) throw ConfigError("class ratio entries must be positive");
    if (count < static_cast<int>(ratio.size()))
        throw ConfigError("count " + std::to_string(count) + " too small for " +
                          std::to_string(ratio.size()) + " classes");
    const double total = std::accumulate(ratio.begin(), ratio.end(), 0.0);
    std::vector<int> counts(ratio.size());
    std::vector<std::pair<double, size_t>> frac;
    int assigned = 0;
    for (size_t c = 0; c < ratio.size(); ++c) {
        const double q = count * ratio[c] / total;
        counts[c] = static_cast<int>(std::floor(q));
        assigned += counts[c];
        frac.emplace_back(-(q - std::floor(q)), c);  // largest remainder first
    }
    std::stable_sort(frac.begin(), frac.end());
    for (int i = 0; i < count - assigned; ++i) counts[frac[static_cast<size_t>(i)].second]++;
    for (size_t c = 0; c < counts.size(); ++c)
        if (counts[c] == 0)
            throw ConfigError("count too small to honor ratio: class " + std::to_string(c) +
                              " would receive zero samples");
    return counts;
}

namespace {

struct ClassRecipe {
    double ax[3];                  // semi-axis ratios (eccentricity)
    double freq_lo, freq_hi;       // per-sample stripe frequency range
};

// The class signal lives mostly in the internal texture frequency, and the
// per-sample frequency ranges overlap, so neither hand-crafted features nor
// a learned representation can separate the classes perfectly; rim strength,
// brightness, and texture gain are per-sample nuisance draws shared by all
// classes. Shape distributions differ only slightly.
ClassRecipe recipe_for(int class_id) {
    switch (class_id % 3) {
        case 0: return {{1.10, 1.00, 0.85}, 0.50, 0.92};
        case 1: return {{1.18, 1.00, 0.80}, 0.85, 1.30};
        default: return {{1.05, 1.05, 0.95}, 0.65, 1.10};
    }
}

}  // namespace

Volume synth_volume(const SynthSpec& spec, int class_id, int index) {
    if (spec.extent < 8) throw ConfigError("phantom extent must be >= 8");
    Rng rng = derive_rng(spec.seed, "synth", static_cast<uint64_t>(class_id),
                         static_cast<uint64_t>(index));
    const int E = spec.extent;
    const ClassRecipe rc = recipe_for(class_id);

    Volume v;
    v.d = v.h = v.w = E;
    v.intensity.assign(v.voxels(), 0.0f);
    v.mask.assign(v.voxels(), 0);
    v.label = class_id;
    {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "c%d_%04d", class_id, index);
        v.source_id = buf;
    }

    const double c0 = (E - 1) / 2.0;
    double center[3];
    for (double& c : center) c = c0 + rng.uniform(-0.06, 0.06) * E;
    const double r0 = E * (0.26 + 0.05 * rng.uniform01());
    double semi[3];
    for (int a = 0; a < 3; ++a) semi[a] = r0 * rc.ax[a] * (1.0 + rng.uniform(-0.10, 0.10));
    // random axis permutation so orientation is not a class give-away
    int perm[3] = {0, 1, 2};
    for (int i = 2; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    const double freq = rng.uniform(rc.freq_lo, rc.freq_hi);
    // per-sample nuisance draws, identically distributed for every class
    const double gain = 1.0 + rng.uniform(-0.15, 0.15);
    const double tex_gain = 1.0 + rng.uniform(-0.2, 0.2);
    const double rim_boost = rng.uniform(1.20, 1.45);
    const double base = 138.0, amp = 28.0;

    for (int z = 0; z < E; ++z)
        for (int y = 0; y < E; ++y)
            for (int x = 0; x < E; ++x) {
                const double off[3] = {z - center[0], y - center[1], x - center[2]};
                double s = 0.0;
                for (int a = 0; a < 3; ++a) {
                    const double t = off[a] / semi[perm[a]];
                    s += t * t;
                }
                double val;
                if (s <= 1.0) {
                    val = gain * (base + tex_gain * amp * std::sin(freq * (z + y + x) + phase)) +
                          rng.normal(0.0, 7.0);
                    if (s >= 0.64) val *= rim_boost;  // rim shell
                    v.mask[v.idx(z, y, x)] = 1;
                } else {
                    val = std::max(0.0, rng.normal(18.0, 6.0));
                }
                v.intensity[v.idx(z, y, x)] = static_cast<float>(val);
            }
    return rescale_intensity(v);
}

DatasetManifest synth_dataset(const SynthSpec& spec, const std::string& out_dir) {
    const std::vector<int> counts = ratio_counts(spec.ratio, spec.count);
    fs::create_directories(fs::path(out_dir) / "vol");

    DatasetManifest m;
    m.seed = spec.seed;
    m.class_counts = counts;
    m.dir = out_dir;
    for (size_t c = 0; c < counts.size(); ++c) {
        for (int i = 0; i < counts[c]; ++i) {
            Volume v = synth_volume(spec, static_cast<int>(c), i);
            ManifestEntry e;
            e.id = v.source_id;
            e.path = "vol/" + v.source_id + ".vol";
            e.label = static_cast<int>(c);
            e.class_name = "class" + std::to_string(c);
            save_volume((fs::path(out_dir) / e.path).string(), v);
            m.samples.push_back(std::move(e));
        }
    }
    save_manifest((fs::path(out_dir) / "manifest.json").string(), m);
    return m;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, Encoder& enc, const nn::AdamState* adam,
                     int64_t step) {
    json j;
    j["format"] = "ssrad-checkpoint";
    j["version"] = 1;
    j["config"] = json::parse(enc.cfg.to_json_string());
    j["fingerprint"] = enc.cfg.fingerprint();
    j["seed"] = enc.init_seed;
    j["step"] = step;
    j["has_optimizer"] = (adam != nullptr);

    auto tensors = enc.named_tensors();
    std::vector<std::pair<std::string, const std::vector<float>*>> payload;
    for (auto& [name, t] : tensors) payload.emplace_back(name, &t->data);
    if (adam) {
        j["adam"] = {{"lr", adam->cfg.lr},
                     {"beta1", adam->cfg.beta1},
                     {"beta2", adam->cfg.beta2},
                     {"eps", adam->cfg.eps},
                     {"weight_decay", adam->cfg.weight_decay},
                     {"t", adam->t}};
        auto params = enc.named_parameters();
        if (adam->m.size() != params.size())
            throw ConfigError("checkpoint: optimizer state does not match parameter list");
        for (size_t i = 0; i < params.size(); ++i) {
            payload.emplace_back("optim.m." + params[i].first, &adam->m[i]);
            payload.emplace_back("optim.v." + params[i].first, &adam->v[i]);
        }
    }

    json manifest = json::array();
    size_t offset = 0;
    size_t idx = 0;
    for (auto& [name, buf] : payload) {
        json entry;
        entry["name"] = name;
        if (idx < tensors.size())
            entry["shape"] = tensors[idx].second->shape;
        else
            entry["shape"] = {static_cast<int>(buf->size())};
        entry["offset"] = offset;
        entry["count"] = buf->size();
        manifest.push_back(entry);
        offset += buf->size() * sizeof(float);
        ++idx;
    }
    j["tensors"] = manifest;

    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path + " for writing");
    os << j.dump() << "\n";
    for (auto& [name, buf] : payload) write_floats(os, *buf);
    if (!os) throw DataError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint " + path);
    json j;
    try {
        j = json::parse(read_header_line(is, path));
    } catch (const json::exception& e) {
        throw DataError("bad checkpoint header in " + path + ": " + e.what());
    }
    if (j.value("format", "") != "ssrad-checkpoint")
        throw DataError("not a checkpoint file: " + path);
    if (j.value("version", -1) != 1)
        throw DataError("unsupported checkpoint version in " + path);

    EncoderConfig cfg = EncoderConfig::from_json_string(j.at("config").dump());
    const std::string fp_stored = j.at("fingerprint").get<std::string>();
    if (fp_stored != cfg.fingerprint())
        throw DataError("checkpoint fingerprint mismatch in " + path + ": header says " +
                        fp_stored + ", config hashes to " + cfg.fingerprint());

    Checkpoint ck;
    ck.encoder = build_encoder(cfg, j.at("seed").get<uint64_t>());
    ck.step = j.at("step").get<int64_t>();
    ck.has_adam = j.value("has_optimizer", false);

    std::map<std::string, std::vector<float>*> slots;
    for (auto& [name, t] : ck.encoder.named_tensors()) slots[name] = &t->data;
    auto params = ck.encoder.named_parameters();
    if (ck.has_adam) {
        const json& a = j.at("adam");
        ck.adam.cfg.lr = a.at("lr").get<float>();
        ck.adam.cfg.beta1 = a.at("beta1").get<float>();
        ck.adam.cfg.beta2 = a.at("beta2").get<float>();
        ck.adam.cfg.eps = a.at("eps").get<float>();
        ck.adam.cfg.weight_decay = a.at("weight_decay").get<float>();
        ck.adam.t = a.at("t").get<int64_t>();
        ck.adam.m.resize(params.size());
        ck.adam.v.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            ck.adam.m[i].resize(params[i].second->numel());
            ck.adam.v[i].resize(params[i].second->numel());
            slots["optim.m." + params[i].first] = &ck.adam.m[i];
            slots["optim.v." + params[i].first] = &ck.adam.v[i];
        }
    }

    for (const auto& entry : j.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const size_t count = entry.at("count").get<size_t>();
        auto it = slots.find(name);
        if (it == slots.end())
            throw DataError("checkpoint tensor " + name + " has no destination in this config");
        if (it->second->size() != count)
            throw DataError("checkpoint tensor " + name + " has " + std::to_string(count) +
                            " values, config expects " + std::to_string(it->second->size()));
        is.read(reinterpret_cast<char*>(it->second->data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (!is) throw DataError("truncated checkpoint payload in " + path + " at tensor " + name);
        slots.erase(it);
    }
    if (!slots.empty())
        throw DataError("checkpoint " + path + " is missing tensor " + slots.begin()->first);
    return ck;
}

Checkpoint load_checkpoint(const std::string& path, const EncoderConfig& expected) {
    Checkpoint ck = load_checkpoint(path);
    if (!(ck.encoder.cfg == expected))
        throw DataError("checkpoint config fingerprint " + ck.encoder.cfg.fingerprint() +
                        " does not match expected " + expected.fingerprint());
    return ck;
}

}  // namespace ssrad
