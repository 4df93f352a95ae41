#include "ssrad/siamese.hpp"

#include <algorithm>
#include <cmath>

#include "ssrad/error.hpp"

namespace ssrad {

double negative_cosine(std::span<const double> t, std::span<const double> r) {
    if (t.size() != r.size()) throw ConfigError("negative_cosine: dimension mismatch");
    double nt = 0.0, nr = 0.0, dot = 0.0;
    for (size_t i = 0; i < t.size(); ++i) {
        nt += t[i] * t[i];
        nr += r[i] * r[i];
        dot += t[i] * r[i];
    }
    if (nt == 0.0 || nr == 0.0)
        throw NumericError("negative_cosine: zero-norm vector, cosine undefined");
    return -dot / (std::sqrt(nt) * std::sqrt(nr));
}

double negative_cosine(std::span<const float> t, std::span<const float> r) {
    std::vector<double> td(t.begin(), t.end()), rd(r.begin(), r.end());
    return negative_cosine(std::span<const double>(td), std::span<const double>(rd));
}

void negative_cosine_grad(std::span<const double> t, std::span<const double> r,
                          std::span<double> gt, double coeff) {
    double nt = 0.0, nr = 0.0, dot = 0.0;
    for (size_t i = 0; i < t.size(); ++i) {
        nt += t[i] * t[i];
        nr += r[i] * r[i];
        dot += t[i] * r[i];
    }
    if (nt == 0.0 || nr == 0.0)
        throw NumericError("negative_cosine: zero-norm vector, cosine undefined");
    const double tn = std::sqrt(nt), rn = std::sqrt(nr);
    const double s = -dot / (tn * rn);  // S(t, r)
    // dS/dt_i = (-r_hat_i - S * t_hat_i) / |t|
    for (size_t i = 0; i < t.size(); ++i) gt[i] += coeff * (-r[i] / rn - s * t[i] / tn) / tn;
}

void negative_cosine_grad(std::span<const float> t, std::span<const float> r,
                          std::span<float> gt, double coeff) {
    std::vector<double> td(t.begin(), t.end()), rd(r.begin(), r.end());
    std::vector<double> g(t.size(), 0.0);
    negative_cosine_grad(std::span<const double>(td), std::span<const double>(rd),
                         std::span<double>(g), coeff);
    for (size_t i = 0; i < t.size(); ++i) gt[i] += static_cast<float>(g[i]);
}

SymmetrizedLoss symmetrized_loss(const Tensor& t1, const Tensor& t2, const Tensor& r1,
                                 const Tensor& r2, const std::vector<float>& weights) {
    if (t1.ndim() != 2 || !t1.same_shape(t2) || !t1.same_shape(r1) || !t1.same_shape(r2))
        throw ConfigError("symmetrized_loss: all four representation batches must be N x d");
    const int N = t1.shape[0], d = t1.shape[1];
    if (static_cast<int>(weights.size()) != N)
        throw ConfigError("symmetrized_loss: weight vector length " +
                          std::to_string(weights.size()) + " != batch size " + std::to_string(N));
    double wsum = 0.0;
    for (float w : weights) {
        if (w < 0.0f || !std::isfinite(w))
            throw ConfigError("symmetrized_loss: weights must be finite and non-negative");
        wsum += w;
    }
    if (wsum == 0.0) throw ConfigError("symmetrized_loss: weight vector sums to zero");

    SymmetrizedLoss out;
    out.per_sample.resize(static_cast<size_t>(N));
    out.g_t1 = Tensor(t1.shape);
    out.g_t2 = Tensor(t2.shape);

    double acc = 0.0;
    for (int i = 0; i < N; ++i) {
        auto row = [d](const Tensor& t, int n) {
            return std::span<const float>(&t.data[t.idx2(n, 0)], static_cast<size_t>(d));
        };
        const double s12 = negative_cosine(row(t1, i), row(r2, i));
        const double s21 = negative_cosine(row(t2, i), row(r1, i));
        const double li = 0.5 * s12 + 0.5 * s21;
        out.per_sample[static_cast<size_t>(i)] = li;
        const double coeff = 0.5 * weights[static_cast<size_t>(i)] / wsum;
        negative_cosine_grad(row(t1, i), row(r2, i),
                             std::span<float>(&out.g_t1.data[out.g_t1.idx2(i, 0)],
                                              static_cast<size_t>(d)),
                             coeff);
        negative_cosine_grad(row(t2, i), row(r1, i),
                             std::span<float>(&out.g_t2.data[out.g_t2.idx2(i, 0)],
                                              static_cast<size_t>(d)),
                             coeff);
        acc += weights[static_cast<size_t>(i)] * li;
    }
    out.loss = acc / wsum;
    return out;
}

double collapse_metric(const Tensor& reps) {
    if (reps.ndim() != 2 || reps.shape[0] < 2)
        throw ConfigError("collapse_metric needs an N x d batch with N >= 2");
    const int N = reps.shape[0], d = reps.shape[1];
    std::vector<double> normed(static_cast<size_t>(N) * d, 0.0);
    for (int n = 0; n < N; ++n) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += static_cast<double>(reps.at2(n, j)) * reps.at2(n, j);
        const double norm = std::sqrt(s);
        if (norm > 0.0)
            for (int j = 0; j < d; ++j)
                normed[static_cast<size_t>(n) * d + j] = reps.at2(n, j) / norm;
    }
    double total = 0.0;
    for (int j = 0; j < d; ++j) {
        double mean = 0.0;
        for (int n = 0; n < N; ++n) mean += normed[static_cast<size_t>(n) * d + j];
        mean /= N;
        double var = 0.0;
        for (int n = 0; n < N; ++n) {
            const double dv = normed[static_cast<size_t>(n) * d + j] - mean;
            var += dv * dv;
        }
        total += std::sqrt(var / N);
    }
    return total / d;
}

SiamTrainer::SiamTrainer(Encoder e, TrainerConfig c) : enc(std::move(e)), cfg(c) {
    opt.cfg = cfg.adam;
}

StepStats SiamTrainer::train_step(const PairBatch& pair) {
    if (!pair.x1.same_shape(pair.x2))
        throw ConfigError("train_step: view shapes differ, " + pair.x1.shape_str() + " vs " +
                          pair.x2.shape_str());
    try {
        enc.zero_grad();

        Encoder::EncodeTrace te1, te2;
        Encoder::PredictTrace tp1, tp2;
        // Active branch: both views through encoder + predictor, with traces.
        Tensor z1 = enc.encode(pair.x1, nn::Mode::train, &te1);
        Tensor t1 = enc.predict_head(z1, nn::Mode::train, &tp1);
        Tensor z2 = enc.encode(pair.x2, nn::Mode::train, &te2);
        Tensor t2 = enc.predict_head(z2, nn::Mode::train, &tp2);

        // Frozen branch: identical parameters, gradient severed. With batch
        // statistics it reproduces the active forward values exactly, so the
        // detached copies are those values; with running statistics it is a
        // separate eval-mode pass.
        Tensor r1, r2;
        if (cfg.frozen_bn == FrozenBnMode::batch_stats) {
            r1 = z1;
            r2 = z2;
        } else {
            r1 = enc.encode(pair.x1, nn::Mode::eval);
            r2 = enc.encode(pair.x2, nn::Mode::eval);
        }

        SymmetrizedLoss sl = symmetrized_loss(t1, t2, r1, r2, pair.weights);

        Tensor gz1 = enc.predict_backward(sl.g_t1, tp1);
        enc.encode_backward(gz1, te1);
        Tensor gz2 = enc.predict_backward(sl.g_t2, tp2);
        enc.encode_backward(gz2, te2);

        auto params = enc.parameters();
        nn::adam_step(params, opt);
        step += 1;

        StepStats st;
        st.step = step;
        st.loss = sl.loss;
        // collapse diagnostic over both views' representations
        Tensor stacked({z1.shape[0] * 2, z1.shape[1]});
        std::copy(z1.data.begin(), z1.data.end(), stacked.data.begin());
        std::copy(z2.data.begin(), z2.data.end(), stacked.data.begin() + z1.data.size());
        st.collapse = collapse_metric(stacked);
        st.lr = opt.cfg.lr;
        auto [mn, mx] = std::minmax_element(pair.weights.begin(), pair.weights.end());
        st.weights_min = *mn;
        st.weights_max = *mx;
        return st;
    } catch (const NumericError& e) {
        throw NumericError("step " + std::to_string(step + 1) + ": " + e.what());
    }
}

}  // namespace ssrad
