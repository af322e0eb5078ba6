#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace kept {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense row-major numeric array. The scalar type is fixed per graph:
// float for training runs, double for gradient checks.
template <typename T>
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T{0})
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
        check_extents();
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_extents();
        if (data_.size() != shape_numel(shape_))
            throw std::invalid_argument("Tensor: element count " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_str(shape_));
    }

    static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    // 2-D views: rank-1 tensors count as a single row.
    std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
    std::size_t cols() const { return rank() == 2 ? shape_[1] : numel(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

  private:
    void check_extents() const {
        for (std::size_t d : shape_)
            if (d == 0) throw std::invalid_argument("Tensor: zero extent in shape " + shape_str(shape_));
    }

    Shape shape_;
    std::vector<T> data_;
};

// Activation statistics for one vector: mean, population std and RMS, all
// under the same epsilon guard so rms^2 == std^2 + mean^2 holds exactly.
struct ActivationStats {
    double mean = 0.0;
    double std = 0.0;
    double rms = 0.0;
};

template <typename T>
ActivationStats activation_stats(const T* x, std::size_t n, double eps) {
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum += static_cast<double>(x[i]);
        sumsq += static_cast<double>(x[i]) * static_cast<double>(x[i]);
    }
    const double mean = sum / static_cast<double>(n);
    const double meansq = sumsq / static_cast<double>(n);
    ActivationStats s;
    s.mean = mean;
    s.std = std::sqrt(meansq - mean * mean + eps);
    s.rms = std::sqrt(meansq + eps);
    return s;
}

template <typename T>
ActivationStats activation_stats(const Tensor<T>& x, double eps) {
    return activation_stats(x.data(), x.numel(), eps);
}

}  // namespace kept
