#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pvrp/rng.hpp"

namespace pvrp {
namespace nd {

#ifdef PVRP_REAL32
using real = float;
#else
using real = double;
#endif

// Dense row-major tensor. Everything the model needs is rank 2 (scalars are
// 1x1), but the shape is kept as a list so checkpoints stay self-describing.
struct Tensor {
    std::vector<int> shape;
    std::vector<real> v;

    Tensor() = default;
    Tensor(int r, int c) : shape{r, c}, v(static_cast<std::size_t>(r) * c, 0) {}

    static Tensor zeros(int r, int c) { return Tensor(r, c); }
    static Tensor scalar(real x) {
        Tensor t(1, 1);
        t.v[0] = x;
        return t;
    }
    static Tensor from_rows(int r, int c, std::initializer_list<real> vals) {
        Tensor t(r, c);
        std::size_t i = 0;
        for (real x : vals) t.v[i++] = x;
        return t;
    }
    // i.i.d. uniform in [lo, hi)
    static Tensor uniform(int r, int c, Rng& rng, real lo, real hi) {
        Tensor t(r, c);
        for (real& x : t.v) x = static_cast<real>(rng.uniform(lo, hi));
        return t;
    }

    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const { return shape.size() < 2 ? (shape.empty() ? 0 : 1) : shape[1]; }
    std::size_t size() const { return v.size(); }

    real& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols() + c]; }
    real at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols() + c]; }
    real* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols(); }
    const real* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const;
};

// Named learnable tensor with a gradient accumulator of identical shape.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor t) : name(std::move(n)), value(std::move(t)) {
        grad = Tensor(value.rows(), value.cols());
    }
    void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), real(0)); }
};

}  // namespace nd
}  // namespace pvrp
