#include "ssrad/tensor.hpp"

#include <cmath>
#include <sstream>

#include "ssrad/error.hpp"

namespace ssrad {

size_t shape_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int e : shape) {
        if (e <= 0) throw ConfigError("tensor extent must be positive, got " + std::to_string(e));
        n *= static_cast<size_t>(e);
    }
    return n;
}

Tensor::Tensor(std::vector<int> s, float fill) : shape(std::move(s)) {
    if (shape.size() > 5) throw ConfigError("tensor order > 5 is not supported");
    data.assign(shape_numel(shape), fill);
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
}

void Tensor::zero_grad() {
    if (!grad.empty()) grad.assign(data.size(), 0.0f);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

void check_finite(const std::vector<float>& v, const char* where) {
    for (float x : v) {
        if (!std::isfinite(x))
            throw NumericError(std::string("non-finite value in ") + where);
    }
}

void check_finite(const Tensor& t, const char* where) { check_finite(t.data, where); }

}  // namespace ssrad
