#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dgan/common.hpp"

namespace dgan {

// (batch, channels, height, width), all >= 1.
struct Shape4 {
    int n = 1, c = 1, h = 1, w = 1;

    std::int64_t count() const {
        return std::int64_t(n) * c * h * w;
    }
    bool operator==(const Shape4&) const = default;
    bool is_scalar() const { return n == 1 && c == 1 && h == 1 && w == 1; }
    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

template <typename T>
class TensorT {
  public:
    TensorT() = default;
    explicit TensorT(Shape4 s) : shape_(s), data_(check_shape(s), T(0)) {}
    TensorT(Shape4 s, std::vector<T> values) : shape_(s), data_(std::move(values)) {
        if (std::int64_t(data_.size()) != s.count())
            throw DataError("tensor data size " + std::to_string(data_.size()) +
                            " does not match shape " + s.str());
        check_shape(s);
    }

    static TensorT full(Shape4 s, T v) {
        TensorT t(s);
        for (auto& x : t.data_) x = v;
        return t;
    }
    static TensorT scalar(T v) { return full({1, 1, 1, 1}, v); }

    const Shape4& shape() const { return shape_; }
    std::int64_t size() const { return std::int64_t(data_.size()); }
    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& at(int n, int c, int h, int w) {
        return data_[((std::int64_t(n) * shape_.c + c) * shape_.h + h) * shape_.w + w];
    }
    const T& at(int n, int c, int h, int w) const {
        return data_[((std::int64_t(n) * shape_.c + c) * shape_.h + h) * shape_.w + w];
    }
    T& operator[](std::int64_t i) { return data_[i]; }
    const T& operator[](std::int64_t i) const { return data_[i]; }

    bool all_finite() const {
        for (const T& x : data_)
            if (!std::isfinite(double(x))) return false;
        return true;
    }
    void require_finite(const char* what) const {
        if (!all_finite()) throw NumericError(std::string("non-finite values in ") + what);
    }

    std::uint64_t checksum() const {
        return fnv1a(data_.data(), data_.size() * sizeof(T));
    }

  private:
    static std::int64_t check_shape(Shape4 s) {
        if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1)
            throw DataError("invalid tensor shape " + s.str());
        return s.count();
    }

    Shape4 shape_;
    std::vector<T> data_;
};

using Tensor4 = TensorT<float>;

}  // namespace dgan
