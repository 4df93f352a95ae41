#include "ssrad/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "ssrad/error.hpp"

namespace ssrad::nn {

namespace {

// contiguous spatial size per (n, c) slab; 1 for N x F tensors
size_t spatial_size(const std::vector<int>& shape) {
    size_t s = 1;
    for (size_t i = 2; i < shape.size(); ++i) s *= static_cast<size_t>(shape[i]);
    return s;
}

int pooled_extent(int ext, int k) { return (ext - k) / k + 1; }

// zero-padded copy of a N x C x D x H x W tensor, padding p on each spatial side
std::vector<float> make_padded(const Tensor& x, int p, int& pd, int& ph, int& pw) {
    const int N = x.shape[0], C = x.shape[1], D = x.shape[2], H = x.shape[3], W = x.shape[4];
    pd = D + 2 * p;
    ph = H + 2 * p;
    pw = W + 2 * p;
    std::vector<float> pad(static_cast<size_t>(N) * C * pd * ph * pw, 0.0f);
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            for (int d = 0; d < D; ++d) {
                for (int h = 0; h < H; ++h) {
                    const float* src = &x.data[x.idx5(n, c, d, h, 0)];
                    float* dst = &pad[((((static_cast<size_t>(n) * C + c) * pd + d + p) * ph +
                                        h + p) *
                                       pw) +
                                      p];
                    std::memcpy(dst, src, sizeof(float) * static_cast<size_t>(W));
                }
            }
        }
    }
    return pad;
}

}  // namespace

// ---------------------------------------------------------------------------
// conv3d
// ---------------------------------------------------------------------------

std::vector<int> conv3d_out_shape(const std::vector<int>& xs, const std::vector<int>& ws,
                                  int stride, int padding) {
    if (xs.size() != 5 || ws.size() != 5)
        throw ConfigError("conv3d expects 5-D input and weights");
    if (ws[2] != ws[3] || ws[3] != ws[4]) throw ConfigError("conv3d kernel must be cubic");
    if (xs[1] != ws[1])
        throw ConfigError("conv3d channel mismatch: input has " + std::to_string(xs[1]) +
                          " channels, weights expect " + std::to_string(ws[1]));
    if (stride < 1) throw ConfigError("conv3d stride must be >= 1");
    if (padding < 0) throw ConfigError("conv3d padding must be >= 0");
    const int k = ws[2];
    std::vector<int> out{xs[0], ws[0], 0, 0, 0};
    for (int a = 0; a < 3; ++a) {
        int ext = xs[2 + a];
        int oe = (ext + 2 * padding - k) / stride + 1;
        if (ext + 2 * padding < k)
            throw ConfigError("conv3d kernel " + std::to_string(k) + " exceeds padded extent " +
                              std::to_string(ext + 2 * padding));
        out[2 + a] = oe;
    }
    return out;
}

Tensor conv3d_forward(const Tensor& x, const Tensor& w, int stride, int padding) {
    auto os = conv3d_out_shape(x.shape, w.shape, stride, padding);
    const int N = x.shape[0], Cin = x.shape[1];
    const int Cout = w.shape[0], k = w.shape[2];
    const int oD = os[2], oH = os[3], oW = os[4];

    int pd, ph, pw;
    std::vector<float> pad = make_padded(x, padding, pd, ph, pw);
    Tensor out(os);

    if (stride == 1 && k == 3) {
        // all three kw taps fused into one vectorized pass per padded row
#pragma omp parallel for collapse(2) schedule(static)
        for (int n = 0; n < N; ++n) {
            for (int co = 0; co < Cout; ++co) {
                float* oslab = &out.data[out.idx5(n, co, 0, 0, 0)];
                for (int od = 0; od < oD; ++od) {
                    for (int oh = 0; oh < oH; ++oh) {
                        float* orow = &oslab[(static_cast<size_t>(od) * oH + oh) * oW];
                        for (int ci = 0; ci < Cin; ++ci) {
                            const float* pslab =
                                &pad[((static_cast<size_t>(n) * Cin + ci) * pd) * ph * pw];
                            for (int kd = 0; kd < 3; ++kd) {
                                for (int kh = 0; kh < 3; ++kh) {
                                    const float* prow =
                                        &pslab[((static_cast<size_t>(od + kd)) * ph +
                                                (oh + kh)) *
                                               pw];
                                    const float* wk = &w.data[w.idx5(co, ci, kd, kh, 0)];
                                    const float c0 = wk[0], c1 = wk[1], c2 = wk[2];
                                    for (int ow = 0; ow < oW; ++ow)
                                        orow[ow] += c0 * prow[ow] + c1 * prow[ow + 1] +
                                                    c2 * prow[ow + 2];
                                }
                            }
                        }
                    }
                }
            }
        }
    } else if (stride == 1) {
        // accumulate one shifted row per kernel tap; rows are contiguous so
        // the inner loop vectorizes
#pragma omp parallel for collapse(2) schedule(static)
        for (int n = 0; n < N; ++n) {
            for (int co = 0; co < Cout; ++co) {
                float* oslab = &out.data[out.idx5(n, co, 0, 0, 0)];
                for (int ci = 0; ci < Cin; ++ci) {
                    const float* pslab =
                        &pad[((static_cast<size_t>(n) * Cin + ci) * pd) * ph * pw];
                    for (int kd = 0; kd < k; ++kd) {
                        for (int kh = 0; kh < k; ++kh) {
                            for (int kw = 0; kw < k; ++kw) {
                                const float coef =
                                    w.data[w.idx5(co, ci, kd, kh, kw)];
                                if (coef == 0.0f) continue;
                                for (int od = 0; od < oD; ++od) {
                                    for (int oh = 0; oh < oH; ++oh) {
                                        const float* prow =
                                            &pslab[((static_cast<size_t>(od + kd)) * ph +
                                                    (oh + kh)) *
                                                       pw +
                                                   kw];
                                        float* orow =
                                            &oslab[(static_cast<size_t>(od) * oH + oh) * oW];
                                        for (int ow = 0; ow < oW; ++ow)
                                            orow[ow] += coef * prow[ow];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    } else {
#pragma omp parallel for collapse(2) schedule(static)
        for (int n = 0; n < N; ++n) {
            for (int co = 0; co < Cout; ++co) {
                for (int od = 0; od < oD; ++od)
                    for (int oh = 0; oh < oH; ++oh)
                        for (int ow = 0; ow < oW; ++ow) {
                            float acc = 0.0f;
                            for (int ci = 0; ci < Cin; ++ci)
                                for (int kd = 0; kd < k; ++kd)
                                    for (int kh = 0; kh < k; ++kh)
                                        for (int kw = 0; kw < k; ++kw) {
                                            size_t pi =
                                                (((static_cast<size_t>(n) * Cin + ci) * pd +
                                                  od * stride + kd) *
                                                     ph +
                                                 oh * stride + kh) *
                                                    pw +
                                                ow * stride + kw;
                                            acc += pad[pi] * w.data[w.idx5(co, ci, kd, kh, kw)];
                                        }
                            out.at5(n, co, od, oh, ow) = acc;
                        }
            }
        }
    }
    return out;
}

Tensor conv3d_backward(const Tensor& gout, const Tensor& x, const Tensor& w, int stride,
                       int padding, std::vector<float>& gw) {
    auto os = conv3d_out_shape(x.shape, w.shape, stride, padding);
    if (gout.shape != os)
        throw ConfigError("conv3d backward: output gradient shape " + gout.shape_str() +
                          " does not match forward output");
    if (gw.size() != w.numel()) throw ConfigError("conv3d backward: weight grad size mismatch");

    const int N = x.shape[0], Cin = x.shape[1], D = x.shape[2], H = x.shape[3], W = x.shape[4];
    const int Cout = w.shape[0], k = w.shape[2];
    const int oD = os[2], oH = os[3], oW = os[4];

    int pd, ph, pw;
    std::vector<float> pad = make_padded(x, padding, pd, ph, pw);

    // dL/dw: one accumulator per weight element, reduction order fixed
    if (stride == 1 && k == 3) {
#pragma omp parallel for schedule(static)
        for (int co = 0; co < Cout; ++co) {
            for (int ci = 0; ci < Cin; ++ci)
                for (int kd = 0; kd < 3; ++kd)
                    for (int kh = 0; kh < 3; ++kh) {
                        double a0 = 0.0, a1 = 0.0, a2 = 0.0;
                        for (int n = 0; n < N; ++n) {
                            const float* pslab =
                                &pad[((static_cast<size_t>(n) * Cin + ci) * pd) * ph * pw];
                            const float* gslab = &gout.data[gout.idx5(n, co, 0, 0, 0)];
                            for (int od = 0; od < oD; ++od)
                                for (int oh = 0; oh < oH; ++oh) {
                                    const float* prow =
                                        &pslab[((static_cast<size_t>(od + kd)) * ph +
                                                (oh + kh)) *
                                               pw];
                                    const float* grow =
                                        &gslab[(static_cast<size_t>(od) * oH + oh) * oW];
                                    float s0 = 0.0f, s1 = 0.0f, s2 = 0.0f;
                                    for (int ow = 0; ow < oW; ++ow) {
                                        s0 += grow[ow] * prow[ow];
                                        s1 += grow[ow] * prow[ow + 1];
                                        s2 += grow[ow] * prow[ow + 2];
                                    }
                                    a0 += s0;
                                    a1 += s1;
                                    a2 += s2;
                                }
                        }
                        gw[w.idx5(co, ci, kd, kh, 0)] += static_cast<float>(a0);
                        gw[w.idx5(co, ci, kd, kh, 1)] += static_cast<float>(a1);
                        gw[w.idx5(co, ci, kd, kh, 2)] += static_cast<float>(a2);
                    }
        }
    } else {
#pragma omp parallel for schedule(static)
        for (int co = 0; co < Cout; ++co) {
            for (int ci = 0; ci < Cin; ++ci)
                for (int kd = 0; kd < k; ++kd)
                    for (int kh = 0; kh < k; ++kh)
                        for (int kw = 0; kw < k; ++kw) {
                            double acc = 0.0;
                            for (int n = 0; n < N; ++n) {
                                const float* pslab =
                                    &pad[((static_cast<size_t>(n) * Cin + ci) * pd) * ph * pw];
                                const float* gslab = &gout.data[gout.idx5(n, co, 0, 0, 0)];
                                for (int od = 0; od < oD; ++od)
                                    for (int oh = 0; oh < oH; ++oh) {
                                        const float* prow =
                                            &pslab[((static_cast<size_t>(od * stride + kd)) *
                                                        ph +
                                                    (oh * stride + kh)) *
                                                       pw +
                                                   kw];
                                        const float* grow =
                                            &gslab[(static_cast<size_t>(od) * oH + oh) * oW];
                                        if (stride == 1) {
                                            for (int ow = 0; ow < oW; ++ow)
                                                acc += static_cast<double>(grow[ow]) * prow[ow];
                                        } else {
                                            for (int ow = 0; ow < oW; ++ow)
                                                acc += static_cast<double>(grow[ow]) *
                                                       prow[static_cast<size_t>(ow) * stride];
                                        }
                                    }
                            }
                            gw[w.idx5(co, ci, kd, kh, kw)] += static_cast<float>(acc);
                        }
        }
    }

    // dL/dx. For the hot stride-1 3x3x3 case this is a gather: correlate the
    // zero-padded output gradient with the flipped kernel, fused over kw.
    Tensor gin(x.shape);
    if (stride == 1 && k == 3 && padding == 1) {
        const int gd = oD + 2, gh = oH + 2, gwd = oW + 2;
        std::vector<float> gp(static_cast<size_t>(N) * Cout * gd * gh * gwd, 0.0f);
#pragma omp parallel for schedule(static)
        for (int n = 0; n < N; ++n)
            for (int co = 0; co < Cout; ++co)
                for (int od = 0; od < oD; ++od)
                    for (int oh = 0; oh < oH; ++oh)
                        std::memcpy(&gp[(((static_cast<size_t>(n) * Cout + co) * gd + od + 1) *
                                             gh +
                                         oh + 1) *
                                            gwd +
                                        1],
                                    &gout.data[gout.idx5(n, co, od, oh, 0)],
                                    sizeof(float) * static_cast<size_t>(oW));
#pragma omp parallel for collapse(2) schedule(static)
        for (int n = 0; n < N; ++n) {
            for (int ci = 0; ci < Cin; ++ci) {
                float* islab = &gin.data[gin.idx5(n, ci, 0, 0, 0)];
                for (int z = 0; z < D; ++z)
                    for (int y = 0; y < H; ++y) {
                        float* irow = &islab[(static_cast<size_t>(z) * H + y) * W];
                        for (int co = 0; co < Cout; ++co) {
                            const float* gslab =
                                &gp[((static_cast<size_t>(n) * Cout + co) * gd) * gh * gwd];
                            for (int fd = 0; fd < 3; ++fd)
                                for (int fh = 0; fh < 3; ++fh) {
                                    const float* grow =
                                        &gslab[((static_cast<size_t>(z + fd)) * gh + (y + fh)) *
                                               gwd];
                                    const float c0 =
                                        w.data[w.idx5(co, ci, 2 - fd, 2 - fh, 2)];
                                    const float c1 =
                                        w.data[w.idx5(co, ci, 2 - fd, 2 - fh, 1)];
                                    const float c2 =
                                        w.data[w.idx5(co, ci, 2 - fd, 2 - fh, 0)];
                                    for (int iw = 0; iw < W; ++iw)
                                        irow[iw] += c0 * grow[iw] + c1 * grow[iw + 1] +
                                                    c2 * grow[iw + 2];
                                }
                        }
                    }
            }
        }
        return gin;
    }
    std::vector<float> gpad(static_cast<size_t>(N) * Cin * pd * ph * pw, 0.0f);
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Cout; ++co) {
            const float* gslab = &gout.data[gout.idx5(n, co, 0, 0, 0)];
            for (int ci = 0; ci < Cin; ++ci) {
                float* pslab = &gpad[((static_cast<size_t>(n) * Cin + ci) * pd) * ph * pw];
                for (int kd = 0; kd < k; ++kd)
                    for (int kh = 0; kh < k; ++kh)
                        for (int kw = 0; kw < k; ++kw) {
                            const float coef = w.data[w.idx5(co, ci, kd, kh, kw)];
                            if (coef == 0.0f) continue;
                            for (int od = 0; od < oD; ++od)
                                for (int oh = 0; oh < oH; ++oh) {
                                    const float* grow =
                                        &gslab[(static_cast<size_t>(od) * oH + oh) * oW];
                                    float* prow =
                                        &pslab[((static_cast<size_t>(od * stride + kd)) * ph +
                                                (oh * stride + kh)) *
                                                   pw +
                                               kw];
                                    if (stride == 1) {
                                        for (int ow = 0; ow < oW; ++ow)
                                            prow[ow] += coef * grow[ow];
                                    } else {
                                        for (int ow = 0; ow < oW; ++ow)
                                            prow[static_cast<size_t>(ow) * stride] +=
                                                coef * grow[ow];
                                    }
                                }
                        }
            }
        }
        for (int ci = 0; ci < Cin; ++ci)
            for (int d = 0; d < D; ++d)
                for (int h = 0; h < H; ++h) {
                    const float* src =
                        &gpad[(((static_cast<size_t>(n) * Cin + ci) * pd + d + padding) * ph +
                               h + padding) *
                                  pw +
                              padding];
                    float* dst = &gin.data[gin.idx5(n, ci, d, h, 0)];
                    std::memcpy(dst, src, sizeof(float) * static_cast<size_t>(W));
                }
    }
    return gin;
}

void Conv3d::init(int c_out, int c_in, int k, int stride_, int padding_, Rng& rng) {
    stride = stride_;
    padding = padding_;
    weight = Tensor({c_out, c_in, k, k, k});
    const double std_dev = std::sqrt(2.0 / (static_cast<double>(c_in) * k * k * k));
    for (float& v : weight.data) v = static_cast<float>(rng.normal() * std_dev);
}

Tensor Conv3d::forward(const Tensor& x, Cache* cache) const {
    if (cache) cache->input = x;
    return conv3d_forward(x, weight, stride, padding);
}

Tensor Conv3d::backward(const Tensor& gout, const Cache& cache) {
    weight.ensure_grad();
    return conv3d_backward(gout, cache.input, weight, stride, padding, weight.grad);
}

// ---------------------------------------------------------------------------
// batch norm
// ---------------------------------------------------------------------------

void BatchNorm::init(int channels) {
    gamma = Tensor({channels}, 1.0f);
    beta = Tensor({channels}, 0.0f);
    running_mean = Tensor({channels}, 0.0f);
    running_var = Tensor({channels}, 1.0f);
}

Tensor BatchNorm::forward(const Tensor& x, Mode mode, Cache* cache) {
    if (x.ndim() < 2) throw ConfigError("batch norm expects at least 2-D input");
    const int N = x.shape[0], C = x.shape[1];
    if (C != gamma.shape[0])
        throw ConfigError("batch norm channel mismatch: input " + std::to_string(C) +
                          ", layer " + std::to_string(gamma.shape[0]));
    const size_t S = spatial_size(x.shape);
    const size_t M = static_cast<size_t>(N) * S;

    std::vector<double> mean(C), var(C), inv_std(C);
    if (mode == Mode::train) {
        if (M < 2)
            throw NumericError(
                "batch norm: degenerate variance (a single element per channel in train mode)");
#pragma omp parallel for schedule(static)
        for (int c = 0; c < C; ++c) {
            double sum = 0.0;
            for (int n = 0; n < N; ++n) {
                const float* p = &x.data[(static_cast<size_t>(n) * C + c) * S];
                for (size_t s = 0; s < S; ++s) sum += p[s];
            }
            const double mu = sum / static_cast<double>(M);
            double sq = 0.0;
            for (int n = 0; n < N; ++n) {
                const float* p = &x.data[(static_cast<size_t>(n) * C + c) * S];
                for (size_t s = 0; s < S; ++s) {
                    const double d = p[s] - mu;
                    sq += d * d;
                }
            }
            mean[c] = mu;
            var[c] = sq / static_cast<double>(M);
        }
        for (int c = 0; c < C; ++c) {
            running_mean.data[c] = static_cast<float>((1.0 - momentum) * running_mean.data[c] +
                                                      momentum * mean[c]);
            running_var.data[c] =
                static_cast<float>((1.0 - momentum) * running_var.data[c] + momentum * var[c]);
        }
    } else {
        for (int c = 0; c < C; ++c) {
            mean[c] = running_mean.data[c];
            var[c] = running_var.data[c];
        }
    }
    for (int c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);

    Tensor out(x.shape);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const float g = gamma.data[c], b = beta.data[c];
            const double mu = mean[c], is = inv_std[c];
            const float* p = &x.data[(static_cast<size_t>(n) * C + c) * S];
            float* q = &out.data[(static_cast<size_t>(n) * C + c) * S];
            for (size_t s = 0; s < S; ++s)
                q[s] = static_cast<float>((p[s] - mu) * is * g + b);
        }
    }

    if (cache) {
        cache->input = x;
        cache->mean = std::move(mean);
        cache->inv_std = std::move(inv_std);
        cache->batch_stats = (mode == Mode::train);
    }
    return out;
}

Tensor BatchNorm::backward(const Tensor& gout, const Cache& cache) {
    const Tensor& x = cache.input;
    const int N = x.shape[0], C = x.shape[1];
    const size_t S = spatial_size(x.shape);
    const double M = static_cast<double>(static_cast<size_t>(N) * S);

    gamma.ensure_grad();
    beta.ensure_grad();
    Tensor gin(x.shape);

#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        const double mu = cache.mean[c], is = cache.inv_std[c];
        const double g = gamma.data[c];
        double sum_g = 0.0, sum_gx = 0.0;
        for (int n = 0; n < N; ++n) {
            const float* xp = &x.data[(static_cast<size_t>(n) * C + c) * S];
            const float* gp = &gout.data[(static_cast<size_t>(n) * C + c) * S];
            for (size_t s = 0; s < S; ++s) {
                const double xh = (xp[s] - mu) * is;
                sum_g += gp[s];
                sum_gx += gp[s] * xh;
            }
        }
        beta.grad[c] += static_cast<float>(sum_g);
        gamma.grad[c] += static_cast<float>(sum_gx);
        const double mg = cache.batch_stats ? sum_g / M : 0.0;
        const double mgx = cache.batch_stats ? sum_gx / M : 0.0;
        for (int n = 0; n < N; ++n) {
            const float* xp = &x.data[(static_cast<size_t>(n) * C + c) * S];
            const float* gp = &gout.data[(static_cast<size_t>(n) * C + c) * S];
            float* op = &gin.data[(static_cast<size_t>(n) * C + c) * S];
            for (size_t s = 0; s < S; ++s) {
                const double xh = (xp[s] - mu) * is;
                op[s] = static_cast<float>(g * is * (gp[s] - mg - xh * mgx));
            }
        }
    }
    return gin;
}

// ---------------------------------------------------------------------------
// relu / pooling
// ---------------------------------------------------------------------------

Tensor relu_forward(const Tensor& x) {
    Tensor out(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] > 0.0f ? x.data[i] : 0.0f;
    return out;
}

Tensor Relu::forward(const Tensor& x, Cache* cache) const {
    Tensor out(x.shape);
    if (cache) cache->positive.assign(x.data.size(), 0);
    for (size_t i = 0; i < x.data.size(); ++i) {
        const bool pos = x.data[i] > 0.0f;
        out.data[i] = pos ? x.data[i] : 0.0f;
        if (cache && pos) cache->positive[i] = 1;
    }
    return out;
}

Tensor Relu::backward(const Tensor& gout, const Cache& cache) const {
    Tensor gin(gout.shape);
    for (size_t i = 0; i < gout.data.size(); ++i)
        gin.data[i] = cache.positive[i] ? gout.data[i] : 0.0f;
    return gin;
}

Tensor MaxPool3d::forward(const Tensor& x, Cache* cache) const {
    if (x.ndim() != 5) throw ConfigError("max pool expects 5-D input");
    const int k = kernel;
    for (int a = 2; a < 5; ++a)
        if (x.shape[a] < k)
            throw ConfigError("max pool kernel " + std::to_string(k) + " exceeds extent " +
                              std::to_string(x.shape[a]));
    const int N = x.shape[0], C = x.shape[1];
    const int oD = pooled_extent(x.shape[2], k), oH = pooled_extent(x.shape[3], k),
              oW = pooled_extent(x.shape[4], k);
    Tensor out({N, C, oD, oH, oW});
    if (cache) {
        cache->argmax.assign(out.numel(), 0);
        cache->in_shape = x.shape;
    }
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            for (int od = 0; od < oD; ++od)
                for (int oh = 0; oh < oH; ++oh)
                    for (int ow = 0; ow < oW; ++ow) {
                        float best = -std::numeric_limits<float>::infinity();
                        size_t best_idx = 0;
                        for (int kd = 0; kd < k; ++kd)
                            for (int kh = 0; kh < k; ++kh)
                                for (int kw = 0; kw < k; ++kw) {
                                    const size_t ii = x.idx5(n, c, od * k + kd, oh * k + kh,
                                                             ow * k + kw);
                                    if (x.data[ii] > best) {  // first index wins ties
                                        best = x.data[ii];
                                        best_idx = ii;
                                    }
                                }
                        const size_t oi = out.idx5(n, c, od, oh, ow);
                        out.data[oi] = best;
                        if (cache) cache->argmax[oi] = static_cast<int64_t>(best_idx);
                    }
        }
    }
    return out;
}

Tensor MaxPool3d::backward(const Tensor& gout, const Cache& cache) const {
    Tensor gin(cache.in_shape);
    for (size_t i = 0; i < gout.data.size(); ++i)
        gin.data[static_cast<size_t>(cache.argmax[i])] += gout.data[i];
    return gin;
}

Tensor global_avg_pool_forward(const Tensor& x) {
    if (x.ndim() != 5) throw ConfigError("global average pool expects 5-D input");
    const int N = x.shape[0], C = x.shape[1];
    const size_t S = spatial_size(x.shape);
    Tensor out({N, C});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const float* p = &x.data[(static_cast<size_t>(n) * C + c) * S];
            double acc = 0.0;
            for (size_t s = 0; s < S; ++s) acc += p[s];
            out.at2(n, c) = static_cast<float>(acc / static_cast<double>(S));
        }
    return out;
}

Tensor global_avg_pool_backward(const Tensor& gout, const std::vector<int>& in_shape) {
    Tensor gin(in_shape);
    const int N = in_shape[0], C = in_shape[1];
    const size_t S = spatial_size(in_shape);
    const float inv = 1.0f / static_cast<float>(S);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const float g = gout.at2(n, c) * inv;
            float* p = &gin.data[(static_cast<size_t>(n) * C + c) * S];
            for (size_t s = 0; s < S; ++s) p[s] = g;
        }
    return gin;
}

// ---------------------------------------------------------------------------
// dense
// ---------------------------------------------------------------------------

void Dense::init(int in, int out, Rng& rng) {
    weight = Tensor({in, out});
    bias = Tensor({out});
    const double std_dev = std::sqrt(2.0 / static_cast<double>(in));
    for (float& v : weight.data) v = static_cast<float>(rng.normal() * std_dev);
}

Tensor Dense::forward(const Tensor& x, Cache* cache) const {
    if (x.ndim() != 2 || x.shape[1] != weight.shape[0])
        throw ConfigError("dense: input " + x.shape_str() + " incompatible with weight " +
                          weight.shape_str());
    const int N = x.shape[0], In = weight.shape[0], Out = weight.shape[1];
    if (cache) cache->input = x;
    Tensor out({N, Out});
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n) {
        float* orow = &out.data[out.idx2(n, 0)];
        for (int o = 0; o < Out; ++o) orow[o] = bias.data[o];
        const float* xrow = &x.data[x.idx2(n, 0)];
        for (int i = 0; i < In; ++i) {
            const float xv = xrow[i];
            if (xv == 0.0f) continue;
            const float* wrow = &weight.data[weight.idx2(i, 0)];
            for (int o = 0; o < Out; ++o) orow[o] += xv * wrow[o];
        }
    }
    return out;
}

Tensor Dense::backward(const Tensor& gout, const Cache& cache) {
    const Tensor& x = cache.input;
    const int N = x.shape[0], In = weight.shape[0], Out = weight.shape[1];
    if (gout.ndim() != 2 || gout.shape[0] != N || gout.shape[1] != Out)
        throw ConfigError("dense backward: bad output gradient shape " + gout.shape_str());
    weight.ensure_grad();
    bias.ensure_grad();

#pragma omp parallel for schedule(static)
    for (int i = 0; i < In; ++i) {
        float* gw = &weight.grad[weight.idx2(i, 0)];
        for (int n = 0; n < N; ++n) {
            const float xv = x.at2(n, i);
            if (xv == 0.0f) continue;
            const float* grow = &gout.data[gout.idx2(n, 0)];
            for (int o = 0; o < Out; ++o) gw[o] += xv * grow[o];
        }
    }
    for (int o = 0; o < Out; ++o) {
        double acc = 0.0;
        for (int n = 0; n < N; ++n) acc += gout.at2(n, o);
        bias.grad[o] += static_cast<float>(acc);
    }

    Tensor gin({N, In});
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n) {
        const float* grow = &gout.data[gout.idx2(n, 0)];
        float* xrow = &gin.data[gin.idx2(n, 0)];
        for (int i = 0; i < In; ++i) {
            const float* wrow = &weight.data[weight.idx2(i, 0)];
            double acc = 0.0;
            for (int o = 0; o < Out; ++o) acc += static_cast<double>(grow[o]) * wrow[o];
            xrow[i] = static_cast<float>(acc);
        }
    }
    return gin;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

void AdamState::init(const std::vector<Tensor*>& params) {
    m.clear();
    v.clear();
    for (const Tensor* p : params) {
        m.emplace_back(p->numel(), 0.0f);
        v.emplace_back(p->numel(), 0.0f);
    }
    t = 0;
}

void adam_step(const std::vector<Tensor*>& params, AdamState& state) {
    if (!state.initialized()) state.init(params);
    if (state.m.size() != params.size())
        throw ConfigError("adam: optimizer state does not match parameter list");

    const AdamConfig& c = state.cfg;
    // validate before mutating anything so a bad step leaves state untouched
    for (const Tensor* p : params) {
        if (p->grad.size() != p->numel())
            throw ConfigError("adam: parameter missing gradient buffer");
        for (float g : p->grad)
            if (!std::isfinite(g))
                throw NumericError("adam: non-finite gradient, aborting optimizer step");
    }

    state.t += 1;
    const double bc1 = 1.0 - std::pow(static_cast<double>(c.beta1), static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(static_cast<double>(c.beta2), static_cast<double>(state.t));

    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = *params[pi];
        std::vector<float>& m = state.m[pi];
        std::vector<float>& v = state.v[pi];
        if (m.size() != p.numel())
            throw ConfigError("adam: moment buffer shape drifted from parameter shape");
        for (size_t i = 0; i < p.numel(); ++i) {
            const double g = static_cast<double>(p.grad[i]) +
                             static_cast<double>(c.weight_decay) * p.data[i];
            const double mn = c.beta1 * m[i] + (1.0 - c.beta1) * g;
            const double vn = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
            m[i] = static_cast<float>(mn);
            v[i] = static_cast<float>(vn);
            const double mh = mn / bc1;
            const double vh = vn / bc2;
            p.data[i] = static_cast<float>(p.data[i] - c.lr * mh / (std::sqrt(vh) + c.eps));
        }
    }
}

}  // namespace ssrad::nn
