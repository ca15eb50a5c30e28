#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "gacvid/errors.hpp"

namespace gacvid {

// Dense row-major tensor of rank <= 4. Rasters use (channels, height, width);
// scalars use shape {1}. Value semantics throughout.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, T fill = T(0))
        : shape_(std::move(shape)), data_(count(shape_), fill) {}

    Tensor(std::initializer_list<int> shape, T fill = T(0))
        : Tensor(std::vector<int>(shape), fill) {}

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor scalar(T v) {
        Tensor t({1});
        t.data_[0] = v;
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int dim(std::size_t i) const { return i < shape_.size() ? shape_[i] : 1; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // (c, y, x) indexing for rank-3 rasters.
    T& operator()(int c, int y, int x) {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    const T& operator()(int c, int y, int x) const {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }

    // (y, x) indexing for rank-2 maps.
    T& operator()(int y, int x) {
        return data_[static_cast<std::size_t>(y) * shape_[1] + x];
    }
    const T& operator()(int y, int x) const {
        return data_[static_cast<std::size_t>(y) * shape_[1] + x];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor reshaped(std::vector<int> shape) const {
        if (count(shape) != data_.size())
            throw ShapeMismatch("reshape changes element count");
        Tensor t = *this;
        t.shape_ = std::move(shape);
        return t;
    }

    // Channel range [begin, end) of a (C,H,W) tensor.
    Tensor slice_channels(int begin, int end) const {
        const int h = dim(1), w = dim(2);
        Tensor out({end - begin, h, w});
        const std::size_t plane = static_cast<std::size_t>(h) * w;
        std::copy(data_.begin() + begin * plane, data_.begin() + end * plane,
                  out.data_.begin());
        return out;
    }

    T sum() const { return std::accumulate(data_.begin(), data_.end(), T(0)); }

    T max_abs() const {
        T m = T(0);
        for (const T& v : data_) m = std::max(m, static_cast<T>(std::abs(v)));
        return m;
    }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i)
            out[i] = static_cast<U>(data_[i]);
        return out;
    }

    bool operator==(const Tensor& o) const {
        return shape_ == o.shape_ && data_ == o.data_;
    }

private:
    static std::size_t count(const std::vector<int>& shape) {
        std::size_t n = shape.empty() ? 0 : 1;
        for (int d : shape) {
            if (d < 0) throw ShapeMismatch("negative dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::vector<int> shape_;
    std::vector<T> data_;
};

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat of zero tensors");
    const int h = parts[0].dim(1), w = parts[0].dim(2);
    int c = 0;
    for (const auto& p : parts) {
        if (p.dim(1) != h || p.dim(2) != w)
            throw ShapeMismatch("concat spatial dims differ");
        c += p.dim(0);
    }
    Tensor<T> out({c, h, w});
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.data(), p.data() + p.size(), out.data() + off);
        off += p.size();
    }
    return out;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw ShapeMismatch("max_abs_diff shapes differ");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

template <typename T>
double mean_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw ShapeMismatch("mean_abs_diff shapes differ");
    if (a.size() == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    return s / static_cast<double>(a.size());
}

}  // namespace gacvid
