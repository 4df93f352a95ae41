#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ssrad/encoder.hpp"
#include "ssrad/nn.hpp"

namespace ssrad {

// Two independently augmented views of the same N source volumes, plus the
// per-sample loss weights (all 1 unless re-weighting is active).
struct PairBatch {
    Tensor x1, x2;                // each N x C x D x H x W
    std::vector<float> weights;   // size N, >= 0, not all zero
};

// S(t, r) = -(t / |t|) . (r / |r|), in [-1, 1]. Throws on a zero-norm vector.
double negative_cosine(std::span<const double> t, std::span<const double> r);
double negative_cosine(std::span<const float> t, std::span<const float> r);

// dS/dt with r treated as a constant (the stop-gradient side), scaled by
// `coeff`, accumulated into gt. The double overload is the core; the float
// one converts at the boundary.
void negative_cosine_grad(std::span<const double> t, std::span<const double> r,
                          std::span<double> gt, double coeff);
void negative_cosine_grad(std::span<const float> t, std::span<const float> r,
                          std::span<float> gt, double coeff);

struct SymmetrizedLoss {
    double loss = 0.0;
    std::vector<double> per_sample;
    Tensor g_t1, g_t2;  // gradients w.r.t. the two predictor outputs
};

// Per-sample loss 0.5*S(t1_i, r2_i) + 0.5*S(t2_i, r1_i), combined as a
// weighted mean (normalized by the weight sum). Gradients flow into t1/t2
// only; the r-branches are constants.
SymmetrizedLoss symmetrized_loss(const Tensor& t1, const Tensor& t2, const Tensor& r1,
                                 const Tensor& r2, const std::vector<float>& weights);

// Mean per-dimension standard deviation of the L2-normalized rows; near zero
// means the encoder collapsed to a constant output.
double collapse_metric(const Tensor& reps);

// How the frozen branch runs its batch norm: with batch statistics (matching
// the active branch exactly) or with running statistics.
enum class FrozenBnMode { batch_stats, running_stats };

struct TrainerConfig {
    nn::AdamConfig adam;  // lr 1e-2, weight decay 1e-4 by default
    FrozenBnMode frozen_bn = FrozenBnMode::batch_stats;
};

struct StepStats {
    int64_t step = 0;
    double loss = 0.0;
    double collapse = 0.0;
    double lr = 0.0;
    double weights_min = 0.0, weights_max = 0.0;
};

// One trainer owns the encoder and optimizer state. The frozen encoder is
// realized as a stop-gradient over the shared parameters: its snapshot is
// taken at step start, when both copies coincide by construction.
struct SiamTrainer {
    Encoder enc;
    nn::AdamState opt;
    int64_t step = 0;
    TrainerConfig cfg;

    SiamTrainer(Encoder e, TrainerConfig c);

    StepStats train_step(const PairBatch& pair);
};

}  // namespace ssrad
