#include "ssrad/encoder.hpp"

#include <nlohmann/json.hpp>

#include "ssrad/error.hpp"

namespace ssrad {

using nlohmann::json;

EncoderConfig EncoderConfig::paper() {
    EncoderConfig c;
    c.preset = "paper";
    return c;  // defaults are the paper-scale network
}

EncoderConfig EncoderConfig::desk() {
    EncoderConfig c;
    c.input_extent = 16;
    c.stem_channels = 8;
    c.stage4_channels = 16;
    c.stage5_channels = 32;
    c.stage6_channels = 64;
    c.dense_hidden = 48;
    c.repr_dim = 32;
    c.predictor_hidden = 8;
    c.pool_kernel = 2;
    c.preset = "desk";
    return c;
}

std::vector<int> EncoderConfig::stage_extents() const {
    const int k = pool_kernel;
    if (k < 2) throw ConfigError("pool kernel must be >= 2");
    std::vector<int> ext{input_extent};  // after stem + residual blocks
    int e = input_extent;
    for (int stage = 0; stage < 3; ++stage) {
        if (e < k)
            throw ConfigError("input extent " + std::to_string(input_extent) +
                              " incompatible with pooling cascade: extent " + std::to_string(e) +
                              " at pooling stage " + std::to_string(stage + 1) +
                              " is smaller than kernel " + std::to_string(k));
        e = (e - k) / k + 1;
        ext.push_back(e);
    }
    if (e < 1) throw ConfigError("pooling cascade collapsed the volume to nothing");
    return ext;
}

void EncoderConfig::validate() const {
    if (input_extent < 2) throw ConfigError("input extent must be >= 2");
    if (in_channels < 1) throw ConfigError("input channels must be >= 1");
    if (repr_dim <= 0) throw ConfigError("representation dim must be positive");
    if (stem_channels <= 0 || stage4_channels <= 0 || stage5_channels <= 0 ||
        stage6_channels <= 0 || dense_hidden <= 0 || predictor_hidden <= 0)
        throw ConfigError("channel widths must be positive");
    stage_extents();
}

std::string EncoderConfig::to_json_string() const {
    json j;
    j["input_extent"] = input_extent;
    j["in_channels"] = in_channels;
    j["stem_channels"] = stem_channels;
    j["stage4_channels"] = stage4_channels;
    j["stage5_channels"] = stage5_channels;
    j["stage6_channels"] = stage6_channels;
    j["dense_hidden"] = dense_hidden;
    j["repr_dim"] = repr_dim;
    j["predictor_hidden"] = predictor_hidden;
    j["pool_kernel"] = pool_kernel;
    j["preset"] = preset;
    return j.dump();
}

EncoderConfig EncoderConfig::from_json_string(const std::string& js) {
    json j = json::parse(js);
    EncoderConfig c;
    c.input_extent = j.at("input_extent").get<int>();
    c.in_channels = j.at("in_channels").get<int>();
    c.stem_channels = j.at("stem_channels").get<int>();
    c.stage4_channels = j.at("stage4_channels").get<int>();
    c.stage5_channels = j.at("stage5_channels").get<int>();
    c.stage6_channels = j.at("stage6_channels").get<int>();
    c.dense_hidden = j.at("dense_hidden").get<int>();
    c.repr_dim = j.at("repr_dim").get<int>();
    c.predictor_hidden = j.at("predictor_hidden").get<int>();
    c.pool_kernel = j.at("pool_kernel").get<int>();
    c.preset = j.at("preset").get<std::string>();
    return c;
}

std::string EncoderConfig::fingerprint() const {
    // FNV-1a over the canonical JSON encoding
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : to_json_string()) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------

void ResidualBlock::init(int channels, Rng& rng) {
    c1.init(channels, channels, 1, 1, 0, rng);
    c2.init(channels, channels, 3, 1, 1, rng);
    c3.init(channels, channels, 1, 1, 0, rng);
    b1.init(channels);
    b2.init(channels);
    b3.init(channels);
}

Tensor ResidualBlock::forward(const Tensor& x, nn::Mode mode, Cache* cache) {
    nn::Relu relu;
    Tensor h = c1.forward(x, cache ? &cache->c1c : nullptr);
    h = b1.forward(h, mode, cache ? &cache->b1c : nullptr);
    h = relu.forward(h, cache ? &cache->r1c : nullptr);
    h = c2.forward(h, cache ? &cache->c2c : nullptr);
    h = b2.forward(h, mode, cache ? &cache->b2c : nullptr);
    h = relu.forward(h, cache ? &cache->r2c : nullptr);
    h = c3.forward(h, cache ? &cache->c3c : nullptr);
    h = b3.forward(h, mode, cache ? &cache->b3c : nullptr);
    for (size_t i = 0; i < h.data.size(); ++i) h.data[i] += x.data[i];
    return relu.forward(h, cache ? &cache->r_out : nullptr);
}

Tensor ResidualBlock::backward(const Tensor& gout, Cache& cache) {
    nn::Relu relu;
    Tensor g = relu.backward(gout, cache.r_out);
    Tensor g_skip = g;  // identity shortcut
    g = b3.backward(g, cache.b3c);
    g = c3.backward(g, cache.c3c);
    g = relu.backward(g, cache.r2c);
    g = b2.backward(g, cache.b2c);
    g = c2.backward(g, cache.c2c);
    g = relu.backward(g, cache.r1c);
    g = b1.backward(g, cache.b1c);
    g = c1.backward(g, cache.c1c);
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += g_skip.data[i];
    return g;
}

// ---------------------------------------------------------------------------

Encoder build_encoder(const EncoderConfig& cfg, uint64_t seed) {
    cfg.validate();
    Encoder e;
    e.cfg = cfg;
    e.init_seed = seed;
    Rng rng = derive_rng(seed, "encoder-init");
    e.conv1.init(cfg.stem_channels, cfg.in_channels, 3, 1, 1, rng);
    e.bn1.init(cfg.stem_channels);
    e.block2.init(cfg.stem_channels, rng);
    e.block3.init(cfg.stem_channels, rng);
    e.pool3.kernel = e.pool4.kernel = e.pool5.kernel = cfg.pool_kernel;
    e.conv4.init(cfg.stage4_channels, cfg.stem_channels, 3, 1, 1, rng);
    e.bn4.init(cfg.stage4_channels);
    e.conv5.init(cfg.stage5_channels, cfg.stage4_channels, 3, 1, 1, rng);
    e.bn5.init(cfg.stage5_channels);
    e.conv6.init(cfg.stage6_channels, cfg.stage5_channels, 3, 1, 1, rng);
    e.bn6.init(cfg.stage6_channels);
    e.dense7.init(cfg.stage6_channels, cfg.dense_hidden, rng);
    e.bn7.init(cfg.dense_hidden);
    e.dense8.init(cfg.dense_hidden, cfg.repr_dim, rng);
    e.pred1.init(cfg.repr_dim, cfg.predictor_hidden, rng);
    e.pred_bn.init(cfg.predictor_hidden);
    e.pred2.init(cfg.predictor_hidden, cfg.repr_dim, rng);
    // tiny bias noise on the output denses: a relu row that dies at the very
    // first step then still yields a nonzero vector for the cosine
    for (float& b : e.dense8.bias.data) b = static_cast<float>(rng.normal() * 0.01);
    for (float& b : e.pred2.bias.data) b = static_cast<float>(rng.normal() * 0.01);
    return e;
}

Tensor Encoder::encode(const Tensor& batch, nn::Mode mode, EncodeTrace* tr) {
    if (batch.ndim() != 5)
        throw ConfigError("encode expects a N x C x D x H x W batch, got " + batch.shape_str());
    if (batch.shape[1] != cfg.in_channels || batch.shape[2] != cfg.input_extent ||
        batch.shape[3] != cfg.input_extent || batch.shape[4] != cfg.input_extent)
        throw ConfigError("encode: batch " + batch.shape_str() + " does not match config (" +
                          std::to_string(cfg.in_channels) + " channels, extent " +
                          std::to_string(cfg.input_extent) + ")");
    check_finite(batch, "input batch");
    nn::Relu relu;

    Tensor h = conv1.forward(batch, tr ? &tr->c1 : nullptr);
    h = bn1.forward(h, mode, tr ? &tr->b1 : nullptr);
    h = relu.forward(h, tr ? &tr->r1 : nullptr);
    check_finite(h, "conv1");
    h = block2.forward(h, mode, tr ? &tr->blk2 : nullptr);
    check_finite(h, "block2");
    h = block3.forward(h, mode, tr ? &tr->blk3 : nullptr);
    check_finite(h, "block3");
    h = pool3.forward(h, tr ? &tr->p3 : nullptr);
    h = conv4.forward(h, tr ? &tr->c4 : nullptr);
    h = bn4.forward(h, mode, tr ? &tr->b4 : nullptr);
    h = relu.forward(h, tr ? &tr->r4 : nullptr);
    check_finite(h, "conv4");
    h = pool4.forward(h, tr ? &tr->p4 : nullptr);
    h = conv5.forward(h, tr ? &tr->c5 : nullptr);
    h = bn5.forward(h, mode, tr ? &tr->b5 : nullptr);
    h = relu.forward(h, tr ? &tr->r5 : nullptr);
    check_finite(h, "conv5");
    h = pool5.forward(h, tr ? &tr->p5 : nullptr);
    h = conv6.forward(h, tr ? &tr->c6 : nullptr);
    h = bn6.forward(h, mode, tr ? &tr->b6 : nullptr);
    h = relu.forward(h, tr ? &tr->r6 : nullptr);
    check_finite(h, "conv6");
    if (tr) tr->gap_in_shape = h.shape;
    h = nn::global_avg_pool_forward(h);
    h = dense7.forward(h, tr ? &tr->d7 : nullptr);
    h = bn7.forward(h, mode, tr ? &tr->b7 : nullptr);
    h = relu.forward(h, tr ? &tr->r7 : nullptr);
    check_finite(h, "dense7");
    h = dense8.forward(h, tr ? &tr->d8 : nullptr);
    check_finite(h, "dense8");
    return h;
}

void Encoder::encode_backward(const Tensor& g_repr, EncodeTrace& tr) {
    nn::Relu relu;
    Tensor g = dense8.backward(g_repr, tr.d8);
    g = relu.backward(g, tr.r7);
    g = bn7.backward(g, tr.b7);
    g = dense7.backward(g, tr.d7);
    g = nn::global_avg_pool_backward(g, tr.gap_in_shape);
    g = relu.backward(g, tr.r6);
    g = bn6.backward(g, tr.b6);
    g = conv6.backward(g, tr.c6);
    g = pool5.backward(g, tr.p5);
    g = relu.backward(g, tr.r5);
    g = bn5.backward(g, tr.b5);
    g = conv5.backward(g, tr.c5);
    g = pool4.backward(g, tr.p4);
    g = relu.backward(g, tr.r4);
    g = bn4.backward(g, tr.b4);
    g = conv4.backward(g, tr.c4);
    g = pool3.backward(g, tr.p3);
    g = block3.backward(g, tr.blk3);
    g = block2.backward(g, tr.blk2);
    g = relu.backward(g, tr.r1);
    g = bn1.backward(g, tr.b1);
    conv1.backward(g, tr.c1);
}

Tensor Encoder::predict_head(const Tensor& reps, nn::Mode mode, PredictTrace* tr) {
    if (reps.ndim() != 2 || reps.shape[1] != cfg.repr_dim)
        throw ConfigError("predictor expects N x " + std::to_string(cfg.repr_dim) +
                          " representations, got " + reps.shape_str());
    nn::Relu relu;
    Tensor h = pred1.forward(reps, tr ? &tr->d1 : nullptr);
    h = pred_bn.forward(h, mode, tr ? &tr->bn : nullptr);
    h = relu.forward(h, tr ? &tr->r : nullptr);
    h = pred2.forward(h, tr ? &tr->d2 : nullptr);
    check_finite(h, "predictor");
    return h;
}

Tensor Encoder::predict_backward(const Tensor& gout, PredictTrace& tr) {
    nn::Relu relu;
    Tensor g = pred2.backward(gout, tr.d2);
    g = relu.backward(g, tr.r);
    g = pred_bn.backward(g, tr.bn);
    return pred1.backward(g, tr.d1);
}

std::vector<std::pair<std::string, Tensor*>> Encoder::named_parameters() {
    std::vector<std::pair<std::string, Tensor*>> out;
    auto block = [&out](const std::string& prefix, ResidualBlock& b) {
        out.emplace_back(prefix + ".c1.weight", &b.c1.weight);
        out.emplace_back(prefix + ".b1.gamma", &b.b1.gamma);
        out.emplace_back(prefix + ".b1.beta", &b.b1.beta);
        out.emplace_back(prefix + ".c2.weight", &b.c2.weight);
        out.emplace_back(prefix + ".b2.gamma", &b.b2.gamma);
        out.emplace_back(prefix + ".b2.beta", &b.b2.beta);
        out.emplace_back(prefix + ".c3.weight", &b.c3.weight);
        out.emplace_back(prefix + ".b3.gamma", &b.b3.gamma);
        out.emplace_back(prefix + ".b3.beta", &b.b3.beta);
    };
    out.emplace_back("conv1.weight", &conv1.weight);
    out.emplace_back("bn1.gamma", &bn1.gamma);
    out.emplace_back("bn1.beta", &bn1.beta);
    block("block2", block2);
    block("block3", block3);
    out.emplace_back("conv4.weight", &conv4.weight);
    out.emplace_back("bn4.gamma", &bn4.gamma);
    out.emplace_back("bn4.beta", &bn4.beta);
    out.emplace_back("conv5.weight", &conv5.weight);
    out.emplace_back("bn5.gamma", &bn5.gamma);
    out.emplace_back("bn5.beta", &bn5.beta);
    out.emplace_back("conv6.weight", &conv6.weight);
    out.emplace_back("bn6.gamma", &bn6.gamma);
    out.emplace_back("bn6.beta", &bn6.beta);
    out.emplace_back("dense7.weight", &dense7.weight);
    out.emplace_back("dense7.bias", &dense7.bias);
    out.emplace_back("bn7.gamma", &bn7.gamma);
    out.emplace_back("bn7.beta", &bn7.beta);
    out.emplace_back("dense8.weight", &dense8.weight);
    out.emplace_back("dense8.bias", &dense8.bias);
    out.emplace_back("pred1.weight", &pred1.weight);
    out.emplace_back("pred1.bias", &pred1.bias);
    out.emplace_back("pred_bn.gamma", &pred_bn.gamma);
    out.emplace_back("pred_bn.beta", &pred_bn.beta);
    out.emplace_back("pred2.weight", &pred2.weight);
    out.emplace_back("pred2.bias", &pred2.bias);
    return out;
}

std::vector<std::pair<std::string, Tensor*>> Encoder::named_buffers() {
    std::vector<std::pair<std::string, Tensor*>> out;
    auto bn = [&out](const std::string& prefix, nn::BatchNorm& b) {
        out.emplace_back(prefix + ".running_mean", &b.running_mean);
        out.emplace_back(prefix + ".running_var", &b.running_var);
    };
    bn("bn1", bn1);
    bn("block2.b1", block2.b1);
    bn("block2.b2", block2.b2);
    bn("block2.b3", block2.b3);
    bn("block3.b1", block3.b1);
    bn("block3.b2", block3.b2);
    bn("block3.b3", block3.b3);
    bn("bn4", bn4);
    bn("bn5", bn5);
    bn("bn6", bn6);
    bn("bn7", bn7);
    bn("pred_bn", pred_bn);
    return out;
}

std::vector<std::pair<std::string, Tensor*>> Encoder::named_tensors() {
    auto out = named_parameters();
    auto bufs = named_buffers();
    out.insert(out.end(), bufs.begin(), bufs.end());
    return out;
}

std::vector<Tensor*> Encoder::parameters() {
    std::vector<Tensor*> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
}

void Encoder::zero_grad() {
    for (Tensor* p : parameters()) {
        p->ensure_grad();
        p->zero_grad();
    }
}

}  // namespace ssrad
