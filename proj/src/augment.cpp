#include "ssrad/augment.hpp"

#include <algorithm>
#include <cmath>

#include "ssrad/error.hpp"

namespace ssrad {

void AugmentPolicy::validate() const {
    auto range = [](double lo, double hi, const char* what) {
        if (!(lo <= hi)) throw ConfigError(std::string("augment policy: bad range for ") + what);
    };
    range(scale_lo, scale_hi, "scale");
    range(gamma_lo, gamma_hi, "gamma");
    range(sharpen_lo, sharpen_hi, "sharpen");
    range(blur_sigma_lo, blur_sigma_hi, "blur sigma");
    range(noise_sigma_lo, noise_sigma_hi, "noise sigma");
    if (scale_lo <= 0.0) throw ConfigError("augment policy: scale must be positive");
    if (rotate_deg < 0.0 || shift_frac < 0.0 || blur_sigma_lo < 0.0 || noise_sigma_lo < 0.0)
        throw ConfigError("augment policy: negative magnitude");
    for (double p : {p_affine, p_appearance, p_gamma, p_noise})
        if (p < 0.0 || p > 1.0) throw ConfigError("augment policy: probability outside [0, 1]");
}

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 matmul(const Mat3& a, const Mat3& b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += a[i][k] * b[k][j];
            r[i][j] = s;
        }
    return r;
}

// rotations acting on (d, h, w) offset columns
Mat3 rot_d(double t) {
    const double c = std::cos(t), s = std::sin(t);
    return {{{1, 0, 0}, {0, c, -s}, {0, s, c}}};
}
Mat3 rot_h(double t) {
    const double c = std::cos(t), s = std::sin(t);
    return {{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
}
Mat3 rot_w(double t) {
    const double c = std::cos(t), s = std::sin(t);
    return {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
}

}  // namespace

Volume affine3d(const Volume& v, const std::array<double, 3>& angles, double scale,
                const std::array<double, 3>& shift_frac) {
    if (scale <= 0.0) throw ConfigError("affine3d: scale must be positive, got " +
                                        std::to_string(scale));
    const int D = v.d, H = v.h, W = v.w;
    const double cd = (D - 1) / 2.0, ch = (H - 1) / 2.0, cw = (W - 1) / 2.0;
    const double td = shift_frac[0] * D, th = shift_frac[1] * H, tw = shift_frac[2] * W;

    // forward map: x -> R * scale * (x - c) + c + t; sample at the inverse
    const Mat3 rinv =
        matmul(rot_w(-angles[2]), matmul(rot_h(-angles[1]), rot_d(-angles[0])));
    const double inv_s = 1.0 / scale;

    Volume out = v;
    std::fill(out.intensity.begin(), out.intensity.end(), 0.0f);
    if (v.has_mask()) std::fill(out.mask.begin(), out.mask.end(), 0);

    for (int z = 0; z < D; ++z)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double od = z - cd - td, oh = y - ch - th, ow = x - cw - tw;
                const double sd = (rinv[0][0] * od + rinv[0][1] * oh + rinv[0][2] * ow) * inv_s + cd;
                const double sh = (rinv[1][0] * od + rinv[1][1] * oh + rinv[1][2] * ow) * inv_s + ch;
                const double sw = (rinv[2][0] * od + rinv[2][1] * oh + rinv[2][2] * ow) * inv_s + cw;

                const int d0 = static_cast<int>(std::floor(sd));
                const int h0 = static_cast<int>(std::floor(sh));
                const int w0 = static_cast<int>(std::floor(sw));
                const double fd = sd - d0, fh = sh - h0, fw = sw - w0;

                double acc = 0.0;
                for (int dz = 0; dz < 2; ++dz)
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const double wgt = (dz ? fd : 1.0 - fd) * (dy ? fh : 1.0 - fh) *
                                               (dx ? fw : 1.0 - fw);
                            if (wgt == 0.0) continue;
                            const int zz = d0 + dz, yy = h0 + dy, xx = w0 + dx;
                            if (zz < 0 || zz >= D || yy < 0 || yy >= H || xx < 0 || xx >= W)
                                continue;  // zero fill
                            acc += wgt * v.at(zz, yy, xx);
                        }
                out.at(z, y, x) = static_cast<float>(acc);

                if (v.has_mask()) {
                    const int zr = static_cast<int>(std::lround(sd));
                    const int yr = static_cast<int>(std::lround(sh));
                    const int xr = static_cast<int>(std::lround(sw));
                    if (zr >= 0 && zr < D && yr >= 0 && yr < H && xr >= 0 && xr < W)
                        out.mask[out.idx(z, y, x)] = v.mask[v.idx(zr, yr, xr)];
                }
            }
    return out;
}

Volume gamma_adjust(const Volume& v, double gamma) {
    if (gamma <= 0.0) throw ConfigError("gamma_adjust: gamma must be positive");
    Volume out = v;
    for (float& x : out.intensity) {
        const double u = std::clamp(static_cast<double>(x), 0.0, 255.0) / 255.0;
        x = static_cast<float>(255.0 * std::pow(u, gamma));
    }
    return out;
}

std::vector<double> gaussian_kernel1d(double sigma) {
    if (sigma < 0.0) throw ConfigError("gaussian kernel: sigma must be >= 0");
    if (sigma == 0.0) return {1.0};
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i / sigma) * (i / sigma));
        k[static_cast<size_t>(i + radius)] = w;
        sum += w;
    }
    for (double& w : k) w /= sum;
    return k;
}

Volume gaussian_blur(const Volume& v, double sigma) {
    const std::vector<double> k = gaussian_kernel1d(sigma);
    if (k.size() == 1) return v;
    const int radius = static_cast<int>(k.size() / 2);
    const int ext[3] = {v.d, v.h, v.w};

    Volume out = v;
    std::vector<float> tmp(v.intensity.size());
    float* src = out.intensity.data();
    float* dst = tmp.data();
    for (int axis = 0; axis < 3; ++axis) {
        for (int z = 0; z < v.d; ++z)
            for (int y = 0; y < v.h; ++y)
                for (int x = 0; x < v.w; ++x) {
                    int pos[3] = {z, y, x};
                    double acc = 0.0;
                    for (int i = -radius; i <= radius; ++i) {
                        int p[3] = {pos[0], pos[1], pos[2]};
                        p[axis] = std::clamp(p[axis] + i, 0, ext[axis] - 1);
                        acc += k[static_cast<size_t>(i + radius)] *
                               src[(static_cast<size_t>(p[0]) * v.h + p[1]) * v.w + p[2]];
                    }
                    dst[(static_cast<size_t>(z) * v.h + y) * v.w + x] = static_cast<float>(acc);
                }
        std::swap(src, dst);
    }
    // three passes end with the result in out.intensity's buffer counterpart
    if (src != out.intensity.data()) out.intensity = tmp;
    return out;
}

Volume sharpen(const Volume& v, double amount) {
    const Volume blurred = gaussian_blur(v, 1.0);
    Volume out = v;
    for (size_t i = 0; i < out.intensity.size(); ++i) {
        const double s = v.intensity[i] + amount * (v.intensity[i] - blurred.intensity[i]);
        out.intensity[i] = static_cast<float>(std::clamp(s, 0.0, 255.0));
    }
    return out;
}

Volume add_noise(const Volume& v, double sigma, Rng& rng) {
    if (sigma < 0.0) throw ConfigError("add_noise: sigma must be >= 0");
    Volume out = v;
    for (float& x : out.intensity)
        x = static_cast<float>(
            std::clamp(static_cast<double>(x) + rng.normal(0.0, sigma), 0.0, 255.0));
    return out;
}

Volume augment_once(const Volume& v, const AugmentPolicy& policy, Rng& rng) {
    policy.validate();
    Volume out = v;
    if (rng.uniform01() < policy.p_affine) {
        const double deg = policy.rotate_deg * M_PI / 180.0;
        const std::array<double, 3> angles{rng.uniform(-deg, deg), rng.uniform(-deg, deg),
                                           rng.uniform(-deg, deg)};
        const double scale = rng.uniform(policy.scale_lo, policy.scale_hi);
        const std::array<double, 3> shift{rng.uniform(-policy.shift_frac, policy.shift_frac),
                                          rng.uniform(-policy.shift_frac, policy.shift_frac),
                                          rng.uniform(-policy.shift_frac, policy.shift_frac)};
        out = affine3d(out, angles, scale, shift);
    }
    if (rng.uniform01() < policy.p_appearance) {
        if (rng.uniform01() < 0.5)
            out = sharpen(out, rng.uniform(policy.sharpen_lo, policy.sharpen_hi));
        else
            out = gaussian_blur(out, rng.uniform(policy.blur_sigma_lo, policy.blur_sigma_hi));
    }
    if (rng.uniform01() < policy.p_gamma)
        out = gamma_adjust(out, rng.uniform(policy.gamma_lo, policy.gamma_hi));
    if (rng.uniform01() < policy.p_noise)
        out = add_noise(out, rng.uniform(policy.noise_sigma_lo, policy.noise_sigma_hi), rng);
    return out;
}

std::pair<Volume, Volume> make_views(const Volume& v, const AugmentPolicy& policy, Rng& rng) {
    Volume x1 = augment_once(v, policy, rng);
    Volume x2 = augment_once(v, policy, rng);
    return {std::move(x1), std::move(x2)};
}

}  // namespace ssrad
