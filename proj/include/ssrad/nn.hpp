#pragma once

#include <cstdint>
#include <vector>

#include "ssrad/rng.hpp"
#include "ssrad/tensor.hpp"

// Manually differentiated 3D network layers. Every layer is a pure function
// of its inputs plus an explicit cache object, so two forward passes (e.g.
// the two Siamese views) can be kept alive and backpropagated independently.
// Backward calls accumulate into the parameter tensors' grad buffers.

namespace ssrad::nn {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// free-function ops (the layer structs below wrap these)
// ---------------------------------------------------------------------------

// input N x Cin x D x H x W, weights Cout x Cin x k x k x k, zero padding.
// Output extent per axis: floor((ext + 2*padding - k) / stride) + 1.
Tensor conv3d_forward(const Tensor& x, const Tensor& w, int stride, int padding);

// Accumulates dL/dw into gw (same shape as w) and returns dL/dx.
Tensor conv3d_backward(const Tensor& gout, const Tensor& x, const Tensor& w, int stride,
                       int padding, std::vector<float>& gw);

std::vector<int> conv3d_out_shape(const std::vector<int>& x_shape,
                                  const std::vector<int>& w_shape, int stride, int padding);

Tensor relu_forward(const Tensor& x);
Tensor global_avg_pool_forward(const Tensor& x);  // N x C x D x H x W -> N x C
Tensor global_avg_pool_backward(const Tensor& gout, const std::vector<int>& in_shape);

// ---------------------------------------------------------------------------
// layers
// ---------------------------------------------------------------------------

struct Conv3d {
    Tensor weight;  // Cout x Cin x k x k x k, no bias (batch norm follows)
    int stride = 1;
    int padding = 0;

    struct Cache {
        Tensor input;
    };

    void init(int c_out, int c_in, int k, int stride_, int padding_, Rng& rng);
    Tensor forward(const Tensor& x, Cache* cache) const;
    Tensor backward(const Tensor& gout, const Cache& cache);
};

// Normalizes over every axis except the channel axis (axis 1). Accepts both
// N x C x D x H x W feature maps and N x C dense activations.
struct BatchNorm {
    Tensor gamma, beta;                      // shape {C}
    Tensor running_mean, running_var;        // shape {C}
    float eps = 1e-5f;
    float momentum = 0.1f;

    struct Cache {
        Tensor input;
        std::vector<double> mean, inv_std;  // statistics used in forward
        bool batch_stats = true;            // false: running stats (constants)
    };

    void init(int channels);
    // train mode normalizes with batch statistics and updates running stats;
    // eval mode uses running stats. A train-mode batch with a single element
    // per channel has no variance to estimate and is rejected.
    Tensor forward(const Tensor& x, Mode mode, Cache* cache);
    // Backward through whichever statistics the cached forward used: batch
    // statistics contribute their own gradient terms, running statistics are
    // constants.
    Tensor backward(const Tensor& gout, const Cache& cache);
};

struct Relu {
    struct Cache {
        std::vector<uint8_t> positive;
    };
    Tensor forward(const Tensor& x, Cache* cache) const;
    Tensor backward(const Tensor& gout, const Cache& cache) const;
};

// Non-overlapping max pooling (stride == kernel). Gradient routes to the
// argmax; ties break toward the lowest linear index.
struct MaxPool3d {
    int kernel = 3;

    struct Cache {
        std::vector<int64_t> argmax;  // flat input index per output element
        std::vector<int> in_shape;
    };

    Tensor forward(const Tensor& x, Cache* cache) const;
    Tensor backward(const Tensor& gout, const Cache& cache) const;
};

struct Dense {
    Tensor weight;  // In x Out
    Tensor bias;    // Out

    struct Cache {
        Tensor input;
    };

    void init(int in, int out, Rng& rng);
    Tensor forward(const Tensor& x, Cache* cache) const;  // x: N x In
    Tensor backward(const Tensor& gout, const Cache& cache);
};

// ---------------------------------------------------------------------------
// Adam with classic L2 weight decay (decay term added to the raw gradient)
// ---------------------------------------------------------------------------

struct AdamConfig {
    float lr = 1e-2f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 1e-4f;
};

struct AdamState {
    AdamConfig cfg;
    int64_t t = 0;
    std::vector<std::vector<float>> m, v;  // parallel to the parameter list

    void init(const std::vector<Tensor*>& params);
    bool initialized() const { return !m.empty(); }
};

// One optimizer step over `params` using their grad buffers. The step counter
// increments before bias correction. Non-finite gradients abort the step.
void adam_step(const std::vector<Tensor*>& params, AdamState& state);

}  // namespace ssrad::nn
