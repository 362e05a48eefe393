#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "steamcast/common.hpp"
#include "steamcast/rng.hpp"

namespace steamcast {

// Dense row-major tensor. Rank 0 is a scalar (one element).
struct Tensor {
    std::vector<int> shape;
    std::vector<real> data;

    Tensor() : data(1, 0.0) {}
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
    }
    Tensor(std::vector<int> s, std::vector<real> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<long>(data.size()) != numel_of(shape))
            throw DimensionError("tensor data length does not match shape");
    }

    static long numel_of(const std::vector<int>& s) {
        long n = 1;
        for (int e : s) {
            if (e < 0) throw DimensionError("negative extent");
            n *= e;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<int> s, real v) {
        Tensor t(std::move(s));
        for (real& x : t.data) x = v;
        return t;
    }

    static Tensor scalar(real v) {
        Tensor t;
        t.data[0] = v;
        return t;
    }

    static Tensor randn(std::vector<int> s, Rng& rng, real std_dev = 1.0) {
        Tensor t(std::move(s));
        for (real& x : t.data) x = std_dev * rng.normal();
        return t;
    }

    long numel() const { return static_cast<long>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    real& at(int i) { return data[static_cast<std::size_t>(i)]; }
    real at(int i) const { return data[static_cast<std::size_t>(i)]; }
    real& at(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    real at(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    real& at(int i, int j, int k) {
        return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    real at(int i, int j, int k) const {
        return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    real& at(int i, int j, int k, int l) {
        return data[((static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }
    real at(int i, int j, int k, int l) const {
        return data[((static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const;

    // Max absolute difference; throws on shape mismatch.
    static real max_abs_diff(const Tensor& a, const Tensor& b);
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) throw DimensionError(std::string(what) + ": shape mismatch");
}

}  // namespace steamcast
