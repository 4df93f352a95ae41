#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssrad/encoder.hpp"
#include "ssrad/nn.hpp"

namespace ssrad {

// A dense 3D scalar field with an optional binary mask and class label; the
// unit sample everywhere in the pipeline. Intensities are kept in [0, 255]
// after ingest rescaling.
struct Volume {
    int d = 0, h = 0, w = 0;
    std::vector<float> intensity;     // d*h*w, row-major, w fastest
    std::vector<uint8_t> mask;        // empty, or d*h*w of {0,1}
    int label = -1;
    std::string source_id;
    bool rescaled = false;            // intensity range mapped to [0, 255]
    bool rescale_degenerate = false;  // input was constant; mapped to the low end

    size_t voxels() const { return static_cast<size_t>(d) * h * w; }
    bool has_mask() const { return !mask.empty(); }
    size_t idx(int z, int y, int x) const {
        return (static_cast<size_t>(z) * h + y) * w + x;
    }
    float& at(int z, int y, int x) { return intensity[idx(z, y, x)]; }
    float at(int z, int y, int x) const { return intensity[idx(z, y, x)]; }
};

// Single-file volume format: one JSON header line, then the little-endian
// float32 intensity payload, then one byte per voxel of mask if present.
void save_volume(const std::string& path, const Volume& v);
Volume load_volume(const std::string& path);

// Linear map of [input min, input max] onto [lo, hi]. A constant input maps
// to lo and flags the volume as degenerate.
Volume rescale_intensity(const Volume& v, float lo = 0.0f, float hi = 255.0f);

struct ManifestEntry {
    std::string id;
    std::string path;  // relative to the manifest file
    int label = -1;
    std::string class_name;
};

struct DatasetManifest {
    int version = 1;
    uint64_t seed = 0;
    std::vector<ManifestEntry> samples;
    std::vector<int> class_counts;  // indexed by label

    std::string dir;  // directory the manifest was loaded from / saved to
};

void save_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest load_manifest(const std::string& path);
std::vector<Volume> load_dataset(const DatasetManifest& m);

// ---------------------------------------------------------------------------
// synthetic imbalanced phantom generator
// ---------------------------------------------------------------------------

struct SynthSpec {
    std::vector<int> ratio{250, 76};  // class ratio, e.g. {2,1,6}
    int count = 326;                  // total samples; split per ratio
    int extent = 16;                  // cubic volume side
    uint64_t seed = 0;
};

// Each class is a distinct ellipsoid-lesion recipe (eccentricity, internal
// texture frequency, rim contrast), separable by both shape and texture
// features. Sample i of class c depends only on (seed, c, i).
Volume synth_volume(const SynthSpec& spec, int class_id, int index);
DatasetManifest synth_dataset(const SynthSpec& spec, const std::string& out_dir);
std::vector<int> ratio_counts(const std::vector<int>& ratio, int count);

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

struct Checkpoint {
    Encoder encoder;
    nn::AdamState adam;   // empty if the checkpoint carried no optimizer state
    bool has_adam = false;
    int64_t step = 0;
};

// JSON header (config, seed, step, tensor manifest with byte offsets)
// followed by a raw little-endian float32 payload. Round trips are bit-exact.
void save_checkpoint(const std::string& path, Encoder& enc, const nn::AdamState* adam,
                     int64_t step);
Checkpoint load_checkpoint(const std::string& path);
// Loads and verifies the stored config against `expected`; a mismatch is an
// error that reports both fingerprints.
Checkpoint load_checkpoint(const std::string& path, const EncoderConfig& expected);

}  // namespace ssrad
