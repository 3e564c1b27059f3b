#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "latentmark/errors.hpp"

namespace latentmark {

// Dense float32 tensor, row-major. Images are CHW, conv weights OIHW.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(numel_of(shape_), 0.f);
    }
    Tensor(std::vector<int> shape, float fill) : shape_(std::move(shape)) {
        data_.assign(numel_of(shape_), fill);
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, float v) { return Tensor(std::move(shape), v); }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    // CHW accessor
    float& at(int c, int y, int x) {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    float at(int c, int y, int x) const {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i)
            s += (i ? "x" : "") + std::to_string(shape_[i]);
        return s + "]";
    }

    void require_shape(const std::vector<int>& want, const char* what) const {
        if (shape_ != want) {
            Tensor t(want);
            throw ShapeMismatch(std::string(what) + ": got " + shape_str() + ", want " +
                                t.shape_str());
        }
    }

    bool all_finite() const {
        for (float v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    Tensor reshaped(std::vector<int> shape) const {
        if (numel_of(shape) != data_.size())
            throw ShapeMismatch("reshape element count");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    static std::size_t numel_of(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        return n;
    }

  private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

inline double mse(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeMismatch("mse: " + a.shape_str() + " vs " + b.shape_str());
    if (a.numel() == 0) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.numel());
}

inline double dot(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += static_cast<double>(a[i]) * b[i];
    return acc;
}

inline double sum_sq(const Tensor& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += static_cast<double>(a[i]) * a[i];
    return acc;
}

} // namespace latentmark
