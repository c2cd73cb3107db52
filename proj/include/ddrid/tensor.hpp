#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "ddrid/common.hpp"

namespace ddrid {

// Dense float32 array, row-major. Activations use [rows, channels] or
// [batch, height, width, channels]; weight matrices use whatever 2-D view
// their consumer documents.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<float> v;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
        v.assign(static_cast<size_t>(count(shape)), 0.0f);
    }
    Tensor(std::initializer_list<int64_t> s) : Tensor(std::vector<int64_t>(s)) {}

    static int64_t count(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) {
            if (d < 0) throw ShapeError("negative dimension");
            n *= d;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int64_t dim(size_t i) const { return i < shape.size() ? shape[i] : 1; }
    float* data() { return v.data(); }
    const float* data() const { return v.data(); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void reshape(std::vector<int64_t> s) {
        if (count(s) != numel()) throw ShapeError("reshape changes element count");
        shape = std::move(s);
    }
    void fill(float x) { std::fill(v.begin(), v.end(), x); }
};

}  // namespace ddrid
