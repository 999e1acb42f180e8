#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gbmseg/errors.hpp"

namespace gbmseg {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

// Dense row-major N-d array (layout N x C x D x H x W for 5-d use, x fastest).
// Production code uses T = float; the double instantiation backs the
// finite-difference test oracles.
template <typename T>
struct TGrid {
    Shape shape;
    std::vector<T> data;

    TGrid() = default;

    explicit TGrid(Shape s, T fill = T(0)) : shape(std::move(s)) {
        for (auto e : shape) {
            if (e <= 0) throw ContractViolation("grid extent must be positive, got shape " + shape_str(shape));
        }
        data.assign(static_cast<std::size_t>(gbmseg::numel(shape)), fill);
    }

    TGrid(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (static_cast<std::int64_t>(data.size()) != gbmseg::numel(shape)) {
            throw ContractViolation("grid data length does not match shape " + shape_str(shape));
        }
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    std::int64_t dim(std::size_t i) const { return shape.at(i); }
    std::size_t ndim() const { return shape.size(); }

    T& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    // 5-d accessor (N,C,D,H,W).
    T& at5(std::int64_t n, std::int64_t c, std::int64_t z, std::int64_t y, std::int64_t x) {
        return data[static_cast<std::size_t>((((n * shape[1] + c) * shape[2] + z) * shape[3] + y) * shape[4] + x)];
    }
    const T& at5(std::int64_t n, std::int64_t c, std::int64_t z, std::int64_t y, std::int64_t x) const {
        return data[static_cast<std::size_t>((((n * shape[1] + c) * shape[2] + z) * shape[3] + y) * shape[4] + x)];
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const TGrid& other) const { return shape == other.shape; }

    template <typename U>
    TGrid<U> cast() const {
        TGrid<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using Grid = TGrid<float>;

inline void check_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (a != b) {
        throw ContractViolation(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
}

} // namespace gbmseg
