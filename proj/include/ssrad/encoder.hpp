#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssrad/nn.hpp"
#include "ssrad/tensor.hpp"

namespace ssrad {

// 3D encoder: stem conv, two bottleneck residual blocks, three conv+pool
// stages, global average pooling, and a two-dense projection; plus the
// bottleneck MLP predictor head used during Siamese training.
struct EncoderConfig {
    int input_extent = 96;
    int in_channels = 1;
    int stem_channels = 32;   // stem conv and both residual blocks
    int stage4_channels = 64;
    int stage5_channels = 128;
    int stage6_channels = 256;
    int dense_hidden = 324;
    int repr_dim = 256;
    int predictor_hidden = 64;
    int pool_kernel = 3;      // pooling stride equals the kernel
    std::string preset = "custom";

    static EncoderConfig paper();
    // Small enough for a CPU forward+backward of batch 6 well under 2 GB.
    static EncoderConfig desk();

    // Extents after stem and after each pooling stage; throws ConfigError if
    // the pooling cascade is incompatible with input_extent.
    std::vector<int> stage_extents() const;
    void validate() const;

    std::string to_json_string() const;
    static EncoderConfig from_json_string(const std::string& js);
    std::string fingerprint() const;  // hash of the canonical config encoding

    bool operator==(const EncoderConfig&) const = default;
};

struct ResidualBlock {
    nn::Conv3d c1, c2, c3;
    nn::BatchNorm b1, b2, b3;

    struct Cache {
        nn::Conv3d::Cache c1c, c2c, c3c;
        nn::BatchNorm::Cache b1c, b2c, b3c;
        nn::Relu::Cache r1c, r2c, r_out;
    };

    void init(int channels, Rng& rng);
    // block(x) = relu(x + F(x)), F = 1x1 -> 3x3 -> 1x1 bottleneck
    Tensor forward(const Tensor& x, nn::Mode mode, Cache* cache);
    Tensor backward(const Tensor& gout, Cache& cache);
};

struct Encoder {
    EncoderConfig cfg;
    uint64_t init_seed = 0;

    nn::Conv3d conv1;
    nn::BatchNorm bn1;
    ResidualBlock block2, block3;
    nn::MaxPool3d pool3, pool4, pool5;
    nn::Conv3d conv4, conv5, conv6;
    nn::BatchNorm bn4, bn5, bn6;
    nn::Dense dense7;
    nn::BatchNorm bn7;
    nn::Dense dense8;

    nn::Dense pred1;
    nn::BatchNorm pred_bn;
    nn::Dense pred2;

    struct EncodeTrace {
        nn::Conv3d::Cache c1;
        nn::BatchNorm::Cache b1;
        nn::Relu::Cache r1;
        ResidualBlock::Cache blk2, blk3;
        nn::MaxPool3d::Cache p3, p4, p5;
        nn::Conv3d::Cache c4, c5, c6;
        nn::BatchNorm::Cache b4, b5, b6;
        nn::Relu::Cache r4, r5, r6, r7;
        std::vector<int> gap_in_shape;
        nn::Dense::Cache d7, d8;
        nn::BatchNorm::Cache b7;
    };
    struct PredictTrace {
        nn::Dense::Cache d1, d2;
        nn::BatchNorm::Cache bn;
        nn::Relu::Cache r;
    };

    // batch: N x C x D x H x W -> N x repr_dim. Non-finite activations raise
    // a NumericError that names the offending layer.
    Tensor encode(const Tensor& batch, nn::Mode mode, EncodeTrace* trace = nullptr);
    void encode_backward(const Tensor& g_repr, EncodeTrace& trace);

    Tensor predict_head(const Tensor& reps, nn::Mode mode, PredictTrace* trace = nullptr);
    Tensor predict_backward(const Tensor& gout, PredictTrace& trace);  // returns d/d reps

    std::vector<Tensor*> parameters();
    std::vector<std::pair<std::string, Tensor*>> named_parameters();
    std::vector<std::pair<std::string, Tensor*>> named_buffers();  // running stats
    std::vector<std::pair<std::string, Tensor*>> named_tensors();  // params + buffers
    void zero_grad();
};

// Deterministic initialization: the same (config, seed) always produces the
// same parameters.
Encoder build_encoder(const EncoderConfig& cfg, uint64_t seed);

}  // namespace ssrad
