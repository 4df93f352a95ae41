#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ssrad {

// Dense N-dimensional float32 tensor with an optional gradient buffer of the
// same shape. Feature maps are laid out N x C x D x H x W (row-major, W
// fastest); dense activations are N x F.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until ensure_grad()

    Tensor() = default;
    explicit Tensor(std::vector<int> s, float fill = 0.0f);

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    size_t numel() const { return data.size(); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void ensure_grad();
    void zero_grad();

    // 5-D accessors (N x C x D x H x W)
    size_t idx5(int n, int c, int d, int h, int w) const {
        return (((static_cast<size_t>(n) * shape[1] + c) * shape[2] + d) * shape[3] + h) *
                   shape[4] +
               w;
    }
    float& at5(int n, int c, int d, int h, int w) { return data[idx5(n, c, d, h, w)]; }
    float at5(int n, int c, int d, int h, int w) const { return data[idx5(n, c, d, h, w)]; }

    // 2-D accessors (N x F)
    size_t idx2(int n, int f) const { return static_cast<size_t>(n) * shape[1] + f; }
    float& at2(int n, int f) { return data[idx2(n, f)]; }
    float at2(int n, int f) const { return data[idx2(n, f)]; }

    std::string shape_str() const;
};

size_t shape_numel(const std::vector<int>& shape);

// Throws NumericError naming `where` if any value is NaN or infinite.
void check_finite(const Tensor& t, const char* where);
void check_finite(const std::vector<float>& v, const char* where);

}  // namespace ssrad
