#include "ssrad/radiomics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "ssrad/error.hpp"

namespace ssrad {

namespace {

std::vector<float> masked_values(const Volume& v) {
    if (!v.has_mask()) throw DataError("feature extraction requires a mask");
    std::vector<float> out;
    for (size_t i = 0; i < v.mask.size(); ++i)
        if (v.mask[i]) out.push_back(v.intensity[i]);
    if (out.empty()) throw DataError("feature extraction: empty mask");
    return out;
}

// linear interpolation between closest ranks on a sorted vector
double percentile(const std::vector<float>& sorted, double p) {
    const double pos = p * (static_cast<double>(sorted.size()) - 1.0);
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = static_cast<size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

constexpr int kHistBins = 32;

// the 13 unique 3D direction vectors at Chebyshev distance 1
constexpr int kOffsets[13][3] = {{0, 0, 1}, {0, 1, 0},  {1, 0, 0},  {0, 1, 1},  {0, 1, -1},
                                 {1, 0, 1}, {1, 0, -1}, {1, 1, 0},  {1, -1, 0}, {1, 1, 1},
                                 {1, 1, -1}, {1, -1, 1}, {1, -1, -1}};

}  // namespace

FeatureVector first_order(const Volume& v) {
    std::vector<float> vals = masked_values(v);
    const size_t n = vals.size();

    double sum = 0.0, energy = 0.0;
    for (float x : vals) {
        sum += x;
        energy += static_cast<double>(x) * x;
    }
    const double mean = sum / static_cast<double>(n);
    double m2 = 0.0, m3 = 0.0, m4 = 0.0, mad = 0.0;
    for (float x : vals) {
        const double d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
        mad += std::abs(d);
    }
    m2 /= static_cast<double>(n);
    m3 /= static_cast<double>(n);
    m4 /= static_cast<double>(n);
    mad /= static_cast<double>(n);
    const double sd = std::sqrt(m2);
    const double skew = m2 > 0.0 ? m3 / (sd * sd * sd) : 0.0;
    const double kurt = m2 > 0.0 ? m4 / (m2 * m2) : 0.0;

    std::sort(vals.begin(), vals.end());
    const double mn = vals.front(), mx = vals.back();

    // histogram entropy / uniformity over the masked range
    std::vector<double> hist(kHistBins, 0.0);
    if (mx > mn) {
        for (float x : vals) {
            int b = static_cast<int>((x - mn) / (mx - mn) * kHistBins);
            b = std::clamp(b, 0, kHistBins - 1);
            hist[static_cast<size_t>(b)] += 1.0;
        }
    } else {
        hist[0] = static_cast<double>(n);
    }
    double entropy = 0.0, uniformity = 0.0;
    for (double c : hist) {
        if (c == 0.0) continue;
        const double p = c / static_cast<double>(n);
        entropy -= p * std::log2(p);
        uniformity += p * p;
    }

    FeatureVector f;
    f.append("fo_mean", mean);
    f.append("fo_variance", m2);
    f.append("fo_skewness", skew);
    f.append("fo_kurtosis", kurt);
    f.append("fo_median", percentile(vals, 0.5));
    f.append("fo_p10", percentile(vals, 0.10));
    f.append("fo_p25", percentile(vals, 0.25));
    f.append("fo_p75", percentile(vals, 0.75));
    f.append("fo_p90", percentile(vals, 0.90));
    f.append("fo_iqr", percentile(vals, 0.75) - percentile(vals, 0.25));
    f.append("fo_min", mn);
    f.append("fo_max", mx);
    f.append("fo_range", mx - mn);
    f.append("fo_energy", energy);
    f.append("fo_rms", std::sqrt(energy / static_cast<double>(n)));
    f.append("fo_mad", mad);
    f.append("fo_entropy", entropy);
    f.append("fo_uniformity", uniformity);
    return f;
}

FeatureVector shape_features(const Volume& v) {
    if (!v.has_mask()) throw DataError("shape features require a mask");
    const int D = v.d, H = v.h, W = v.w;

    auto inside = [&](int z, int y, int x) {
        return z >= 0 && z < D && y >= 0 && y < H && x >= 0 && x < W &&
               v.mask[v.idx(z, y, x)] != 0;
    };

    int64_t volume = 0, faces = 0;
    int zmin = D, zmax = -1, ymin = H, ymax = -1, xmin = W, xmax = -1;
    std::vector<std::array<int, 3>> boundary;
    for (int z = 0; z < D; ++z)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                if (!v.mask[v.idx(z, y, x)]) continue;
                ++volume;
                zmin = std::min(zmin, z);
                zmax = std::max(zmax, z);
                ymin = std::min(ymin, y);
                ymax = std::max(ymax, y);
                xmin = std::min(xmin, x);
                xmax = std::max(xmax, x);
                int exposed = 0;
                constexpr int nb[6][3] = {{1, 0, 0},  {-1, 0, 0}, {0, 1, 0},
                                          {0, -1, 0}, {0, 0, 1},  {0, 0, -1}};
                for (const auto& o : nb)
                    if (!inside(z + o[0], y + o[1], x + o[2])) ++exposed;
                faces += exposed;
                if (exposed > 0) boundary.push_back({z, y, x});
            }
    if (volume == 0) throw DataError("shape features: empty mask");

    // max pairwise distance between boundary voxel centers
    double max_d2 = 0.0;
    for (size_t i = 0; i < boundary.size(); ++i)
        for (size_t j = i + 1; j < boundary.size(); ++j) {
            const double dz = boundary[i][0] - boundary[j][0];
            const double dy = boundary[i][1] - boundary[j][1];
            const double dx = boundary[i][2] - boundary[j][2];
            max_d2 = std::max(max_d2, dz * dz + dy * dy + dx * dx);
        }

    const double V = static_cast<double>(volume);
    const double A = static_cast<double>(faces);
    const double sphericity = std::cbrt(M_PI) * std::pow(6.0 * V, 2.0 / 3.0) / A;
    const double ed = zmax - zmin + 1, eh = ymax - ymin + 1, ew = xmax - xmin + 1;

    FeatureVector f;
    f.append("shape_volume", V);
    f.append("shape_surface_area", A);
    f.append("shape_surface_to_volume", A / V);
    f.append("shape_sphericity", sphericity);
    f.append("shape_max_diameter_3d", std::sqrt(max_d2));
    f.append("shape_extent_d", ed);
    f.append("shape_extent_h", eh);
    f.append("shape_extent_w", ew);
    f.append("shape_bbox_volume", ed * eh * ew);
    f.append("shape_fill_fraction", V / (ed * eh * ew));
    return f;
}

FeatureVector glcm_features(const Volume& v, int bins) {
    if (bins < 2) throw ConfigError("GLCM needs at least 2 bins");
    if (!v.has_mask()) throw DataError("GLCM features require a mask");
    size_t masked = 0;
    for (uint8_t m : v.mask) masked += m ? 1 : 0;
    if (masked < 2) throw DataError("GLCM features need a mask with at least 2 voxels");

    float mn = 0.0f, mx = 0.0f;
    bool first = true;
    for (size_t i = 0; i < v.mask.size(); ++i) {
        if (!v.mask[i]) continue;
        if (first) {
            mn = mx = v.intensity[i];
            first = false;
        } else {
            mn = std::min(mn, v.intensity[i]);
            mx = std::max(mx, v.intensity[i]);
        }
    }
    auto level = [&](float x) {
        if (mx == mn) return 0;
        int b = static_cast<int>((x - mn) / (mx - mn) * bins);
        return std::clamp(b, 0, bins - 1);
    };

    std::vector<double> P(static_cast<size_t>(bins) * bins, 0.0);
    double total = 0.0;
    for (int z = 0; z < v.d; ++z)
        for (int y = 0; y < v.h; ++y)
            for (int x = 0; x < v.w; ++x) {
                if (!v.mask[v.idx(z, y, x)]) continue;
                const int la = level(v.at(z, y, x));
                for (const auto& o : kOffsets) {
                    const int zz = z + o[0], yy = y + o[1], xx = x + o[2];
                    if (zz < 0 || zz >= v.d || yy < 0 || yy >= v.h || xx < 0 || xx >= v.w)
                        continue;
                    if (!v.mask[v.idx(zz, yy, xx)]) continue;
                    const int lb = level(v.at(zz, yy, xx));
                    P[static_cast<size_t>(la) * bins + lb] += 1.0;
                    P[static_cast<size_t>(lb) * bins + la] += 1.0;
                    total += 2.0;
                }
            }
    if (total == 0.0) {
        // no co-occurring pair inside the mask; treat as a single-cell matrix
        P[0] = 1.0;
        total = 1.0;
    }
    for (double& p : P) p /= total;

    double mu = 0.0;
    std::vector<double> marginal(static_cast<size_t>(bins), 0.0);
    for (int i = 0; i < bins; ++i)
        for (int j = 0; j < bins; ++j) marginal[static_cast<size_t>(i)] += P[static_cast<size_t>(i) * bins + j];
    for (int i = 0; i < bins; ++i) mu += i * marginal[static_cast<size_t>(i)];
    double var = 0.0;
    for (int i = 0; i < bins; ++i) var += (i - mu) * (i - mu) * marginal[static_cast<size_t>(i)];

    double contrast = 0.0, dissim = 0.0, energy = 0.0, entropy = 0.0, invdiff = 0.0, idm = 0.0,
           cross = 0.0;
    for (int i = 0; i < bins; ++i)
        for (int j = 0; j < bins; ++j) {
            const double p = P[static_cast<size_t>(i) * bins + j];
            if (p == 0.0) continue;
            const double d = std::abs(i - j);
            contrast += d * d * p;
            dissim += d * p;
            energy += p * p;
            entropy -= p * std::log2(p);
            invdiff += p / (1.0 + d);
            idm += p / (1.0 + d * d);
            cross += i * j * p;
        }
    // constant region: define correlation as 1 (perfectly predictable)
    const double correlation = var > 0.0 ? (cross - mu * mu) / var : 1.0;

    FeatureVector f;
    f.append("glcm_contrast", contrast);
    f.append("glcm_dissimilarity", dissim);
    f.append("glcm_joint_energy", energy);
    f.append("glcm_joint_entropy", entropy);
    f.append("glcm_correlation", correlation);
    f.append("glcm_inverse_difference", invdiff);
    f.append("glcm_inverse_difference_moment", idm);
    return f;
}

FeatureVector traditional_features(const Volume& v) {
    FeatureVector f = first_order(v);
    FeatureVector s = shape_features(v);
    FeatureVector g = glcm_features(v);
    f.names.insert(f.names.end(), s.names.begin(), s.names.end());
    f.values.insert(f.values.end(), s.values.begin(), s.values.end());
    f.names.insert(f.names.end(), g.names.begin(), g.names.end());
    f.values.insert(f.values.end(), g.values.begin(), g.values.end());
    return f;
}

std::vector<FeatureRecord> extract_all(const std::vector<Volume>& dataset, Encoder* encoder,
                                       int encode_batch) {
    std::vector<FeatureRecord> records(dataset.size());
    for (size_t i = 0; i < dataset.size(); ++i) {
        FeatureVector t = traditional_features(dataset[i]);
        records[i].id = dataset[i].source_id.empty() ? "sample" + std::to_string(i)
                                                     : dataset[i].source_id;
        records[i].label = dataset[i].label;
        records[i].trad_names = std::move(t.names);
        records[i].f_trad = std::move(t.values);
    }
    if (encoder) {
        const EncoderConfig& cfg = encoder->cfg;
        if (cfg.in_channels != 1)
            throw DataError("extract_all feeds single-channel volumes; encoder expects " +
                            std::to_string(cfg.in_channels) + " channels");
        for (size_t start = 0; start < dataset.size(); start += static_cast<size_t>(encode_batch)) {
            const size_t end = std::min(dataset.size(), start + static_cast<size_t>(encode_batch));
            const int nb = static_cast<int>(end - start);
            Tensor batch({nb, cfg.in_channels, cfg.input_extent, cfg.input_extent,
                          cfg.input_extent});
            for (int b = 0; b < nb; ++b) {
                const Volume& v = dataset[start + static_cast<size_t>(b)];
                if (v.d != cfg.input_extent || v.h != cfg.input_extent || v.w != cfg.input_extent)
                    throw DataError("volume " + v.source_id + " extent does not match encoder (" +
                                    std::to_string(cfg.input_extent) + ")");
                for (size_t j = 0; j < v.intensity.size(); ++j)
                    batch.data[static_cast<size_t>(b) * v.intensity.size() + j] =
                        v.intensity[j] / 255.0f;
            }
            Tensor reps = encoder->encode(batch, nn::Mode::eval);
            for (int b = 0; b < nb; ++b) {
                auto& rec = records[start + static_cast<size_t>(b)];
                rec.f_ssl.resize(static_cast<size_t>(cfg.repr_dim));
                for (int j = 0; j < cfg.repr_dim; ++j)
                    rec.f_ssl[static_cast<size_t>(j)] = reps.at2(b, j);
            }
        }
    }
    return records;
}

}  // namespace ssrad
