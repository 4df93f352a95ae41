#pragma once

#include <array>
#include <utility>

#include "ssrad/data.hpp"
#include "ssrad/rng.hpp"

namespace ssrad {

// Stochastic 3D view generation in four categories: affine transform,
// appearance enhancement (sharpen or blur), gamma contrast change, and
// additive Gaussian noise. Operates on [0, 255] intensities.
struct AugmentPolicy {
    double rotate_deg = 20.0;              // per-axis rotation in [-20, 20] degrees
    double scale_lo = 0.7, scale_hi = 1.3;
    double shift_frac = 0.05;              // of the volume extent, per axis
    double gamma_lo = 0.7, gamma_hi = 1.5;
    double sharpen_lo = 0.5, sharpen_hi = 1.5;
    double blur_sigma_lo = 0.5, blur_sigma_hi = 1.5;
    double noise_sigma_lo = 0.5, noise_sigma_hi = 5.0;
    double p_affine = 0.5;
    double p_appearance = 0.5;  // picks sharpen or blur with equal odds
    double p_gamma = 0.5;
    double p_noise = 0.5;

    void validate() const;
};

// Composed rotate-scale-translate about the volume center with trilinear
// interpolation; out-of-field voxels are filled with 0. Angles are radians
// about the D, H, W axes; shift is a fraction of the extent per axis. A mask,
// if present, moves with the volume (nearest neighbor).
Volume affine3d(const Volume& v, const std::array<double, 3>& angles, double scale,
                const std::array<double, 3>& shift_frac);

Volume gamma_adjust(const Volume& v, double gamma);   // 255 * (v/255)^gamma
Volume sharpen(const Volume& v, double amount);       // v + amount * (v - blur(v))
Volume gaussian_blur(const Volume& v, double sigma);  // separable, edge-replicated
Volume add_noise(const Volume& v, double sigma, Rng& rng);

// Normalized 1-D Gaussian taps for the separable blur (sums to 1).
std::vector<double> gaussian_kernel1d(double sigma);

// One random augmentation chain drawn from the policy.
Volume augment_once(const Volume& v, const AugmentPolicy& policy, Rng& rng);

// Two independent chains applied to the same source volume.
std::pair<Volume, Volume> make_views(const Volume& v, const AugmentPolicy& policy, Rng& rng);

}  // namespace ssrad
