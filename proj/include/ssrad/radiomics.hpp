#pragma once

#include <string>
#include <vector>

#include "ssrad/data.hpp"
#include "ssrad/encoder.hpp"

namespace ssrad {

// Traditional radiomics over the masked region of a volume: first-order
// intensity statistics, mask shape features, and gray-level co-occurrence
// matrix texture features. A compact, documented subset of the usual
// hand-crafted families; names are prefixed fo_ / shape_ / glcm_.
struct FeatureVector {
    std::vector<std::string> names;
    std::vector<double> values;

    void append(const std::string& name, double value) {
        names.push_back(name);
        values.push_back(value);
    }
};

// Intensity statistics over masked voxels only. Entropy and uniformity use a
// 32-bin histogram over the masked min-max range.
FeatureVector first_order(const Volume& v);

// Depends only on the mask: voxel volume, face-counted surface area,
// sphericity, maximum 3D diameter over boundary voxels, bounding extents.
FeatureVector shape_features(const Volume& v);

// Symmetric normalized GLCM over the 13 unique distance-1 3D offsets,
// accumulated into a single matrix; intensities quantized to `bins`
// equal-width levels over the masked range.
FeatureVector glcm_features(const Volume& v, int bins = 32);

FeatureVector traditional_features(const Volume& v);  // fo + shape + glcm

struct FeatureRecord {
    std::string id;
    int label = -1;
    std::vector<std::string> trad_names;
    std::vector<double> f_trad;
    std::vector<double> f_ssl;

    std::vector<double> f_concat() const {
        std::vector<double> out = f_trad;
        out.insert(out.end(), f_ssl.begin(), f_ssl.end());
        return out;
    }
};

// One record per sample: traditional features from the masked volume, SSL
// features from an eval-mode encode. Pass a null encoder for
// traditional-only extraction (f_ssl stays empty).
std::vector<FeatureRecord> extract_all(const std::vector<Volume>& dataset, Encoder* encoder,
                                       int encode_batch = 8);

}  // namespace ssrad
