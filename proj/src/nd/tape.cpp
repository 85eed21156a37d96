#include "pvrp/nd/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pvrp/errors.hpp"

namespace pvrp {
namespace nd {

namespace {

constexpr real kMaskSentinel = real(-1e9);

// C += A * B
void mm_acc(const Tensor& A, const Tensor& B, Tensor& C) {
    const int r = A.rows(), k = A.cols(), c = B.cols();
    for (int i = 0; i < r; ++i) {
        const real* a = A.row(i);
        real* out = C.row(i);
        for (int p = 0; p < k; ++p) {
            const real s = a[p];
            if (s == real(0)) continue;
            const real* b = B.row(p);
            for (int j = 0; j < c; ++j) out[j] += s * b[j];
        }
    }
}

// C += A * B^T
void mm_nt_acc(const Tensor& A, const Tensor& B, Tensor& C) {
    const int r = A.rows(), k = A.cols(), c = B.rows();
    for (int i = 0; i < r; ++i) {
        const real* a = A.row(i);
        real* out = C.row(i);
        for (int j = 0; j < c; ++j) {
            const real* b = B.row(j);
            real s = 0;
            for (int p = 0; p < k; ++p) s += a[p] * b[p];
            out[j] += s;
        }
    }
}

// C += A^T * B
void mm_tn_acc(const Tensor& A, const Tensor& B, Tensor& C) {
    const int r = A.rows(), k = A.cols(), c = B.cols();
    for (int i = 0; i < r; ++i) {
        const real* a = A.row(i);
        const real* b = B.row(i);
        for (int p = 0; p < k; ++p) {
            const real s = a[p];
            if (s == real(0)) continue;
            real* out = C.row(p);
            for (int j = 0; j < c; ++j) out[j] += s * b[j];
        }
    }
}

}  // namespace

std::string Tensor::shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tape::Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
}

Tensor& Tape::grad(Var x) {
    Node& n = nodes_[x];
    if (n.grad.v.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
    return n.grad;
}

Tape::Var Tape::constant(Tensor t) {
    Node n;
    n.op = Op::Constant;
    n.value = std::move(t);
    n.needs_grad = false;
    return push(std::move(n));
}

Tape::Var Tape::leaf(Parameter& p) {
    Node n;
    n.op = Op::Leaf;
    n.value = p.value;
    n.param = &p;
    n.needs_grad = true;
    return push(std::move(n));
}

Tape::Var Tape::matmul(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.cols() != B.rows())
        throw DimensionError("matmul: " + A.shape_str() + " x " + B.shape_str());
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    n.value = Tensor(A.rows(), B.cols());
    mm_acc(A, B, n.value);
    return push(std::move(n));
}

Tape::Var Tape::matmul_nt(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.cols() != B.cols())
        throw DimensionError("matmul_nt: " + A.shape_str() + " x " + B.shape_str() + "^T");
    Node n;
    n.op = Op::MatMulNT;
    n.a = a;
    n.b = b;
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    n.value = Tensor(A.rows(), B.rows());
    mm_nt_acc(A, B, n.value);
    return push(std::move(n));
}

Tape::Var Tape::add(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) throw DimensionError("add: " + A.shape_str() + " vs " + B.shape_str());
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    n.value = A;
    for (std::size_t i = 0; i < n.value.v.size(); ++i) n.value.v[i] += B.v[i];
    return push(std::move(n));
}

Tape::Var Tape::add_rowvec(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (B.rows() != 1 || B.cols() != A.cols())
        throw DimensionError("add_rowvec: " + A.shape_str() + " vs " + B.shape_str());
    Node n;
    n.op = Op::AddRowVec;
    n.a = a;
    n.b = b;
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    n.value = A;
    for (int r = 0; r < A.rows(); ++r) {
        real* out = n.value.row(r);
        for (int c = 0; c < A.cols(); ++c) out[c] += B.v[c];
    }
    return push(std::move(n));
}

Tape::Var Tape::scale(Var a, real s) {
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.scalar = s;
    n.needs_grad = nodes_[a].needs_grad;
    n.value = val(a);
    for (real& x : n.value.v) x *= s;
    return push(std::move(n));
}

Tape::Var Tape::relu(Var a) {
    Node n;
    n.op = Op::Relu;
    n.a = a;
    n.needs_grad = nodes_[a].needs_grad;
    n.value = val(a);
    for (real& x : n.value.v) x = x > real(0) ? x : real(0);
    return push(std::move(n));
}

Tape::Var Tape::tanh(Var a) {
    Node n;
    n.op = Op::Tanh;
    n.a = a;
    n.needs_grad = nodes_[a].needs_grad;
    n.value = val(a);
    for (real& x : n.value.v) x = std::tanh(x);
    return push(std::move(n));
}

Tape::Var Tape::log(Var a) {
    Node n;
    n.op = Op::Log;
    n.a = a;
    n.needs_grad = nodes_[a].needs_grad;
    n.value = val(a);
    for (real& x : n.value.v) x = std::log(x);
    return push(std::move(n));
}

Tape::Var Tape::softmax_rows(Var a, const std::vector<std::uint8_t>* mask) {
    const Tensor& A = val(a);
    if (mask && mask->size() != A.v.size())
        throw DimensionError("softmax_rows: mask size does not match tensor");
    Node n;
    n.op = Op::SoftmaxRows;
    n.a = a;
    n.needs_grad = nodes_[a].needs_grad;
    n.value = Tensor(A.rows(), A.cols());
    if (mask) n.idx.assign(mask->begin(), mask->end());
    const int cols = A.cols();
    for (int r = 0; r < A.rows(); ++r) {
        const real* in = A.row(r);
        real* out = n.value.row(r);
        const std::uint8_t* mrow = mask ? mask->data() + static_cast<std::size_t>(r) * cols : nullptr;
        bool any = false;
        real mx = -std::numeric_limits<real>::infinity();
        for (int c = 0; c < cols; ++c) {
            const real z = mrow && !mrow[c] ? in[c] + kMaskSentinel : in[c];
            if (!mrow || mrow[c]) any = true;
            mx = std::max(mx, z);
        }
        if (!any) throw ContractError("softmax_rows: fully masked row " + std::to_string(r));
        real total = 0;
        for (int c = 0; c < cols; ++c) {
            const real z = mrow && !mrow[c] ? in[c] + kMaskSentinel : in[c];
            out[c] = std::exp(z - mx);
            total += out[c];
        }
        for (int c = 0; c < cols; ++c) out[c] /= total;
        if (mrow)
            for (int c = 0; c < cols; ++c)
                if (!mrow[c]) out[c] = real(0);
    }
    return push(std::move(n));
}

Tape::Var Tape::layer_norm(Var x, Var gain, Var bias) {
    const Tensor& X = val(x);
    const Tensor& G = val(gain);
    const Tensor& B = val(bias);
    if (X.cols() < 2) throw DimensionError("layer_norm: need at least 2 columns");
    if (G.rows() != 1 || G.cols() != X.cols() || B.rows() != 1 || B.cols() != X.cols())
        throw DimensionError("layer_norm: gain/bias must be 1 x cols");
    constexpr real eps = real(1e-5);
    Node n;
    n.op = Op::LayerNorm;
    n.a = x;
    n.b = gain;
    n.c = bias;
    n.needs_grad = nodes_[x].needs_grad || nodes_[gain].needs_grad || nodes_[bias].needs_grad;
    n.value = Tensor(X.rows(), X.cols());
    n.aux.resize(X.v.size() + X.rows());  // xhat, then 1/sigma per row
    const int cols = X.cols();
    for (int r = 0; r < X.rows(); ++r) {
        const real* in = X.row(r);
        real mean = 0;
        for (int c = 0; c < cols; ++c) mean += in[c];
        mean /= cols;
        real var = 0;
        for (int c = 0; c < cols; ++c) var += (in[c] - mean) * (in[c] - mean);
        var /= cols;
        const real inv_sigma = real(1) / std::sqrt(var + eps);
        n.aux[X.v.size() + r] = inv_sigma;
        real* out = n.value.row(r);
        for (int c = 0; c < cols; ++c) {
            const real xhat = (in[c] - mean) * inv_sigma;
            n.aux[static_cast<std::size_t>(r) * cols + c] = xhat;
            out[c] = G.v[c] * xhat + B.v[c];
        }
    }
    return push(std::move(n));
}

Tape::Var Tape::concat_cols(std::span<const Var> xs) {
    if (xs.empty()) throw DimensionError("concat_cols: empty input");
    const int rows = val(xs[0]).rows();
    int cols = 0;
    bool needs = false;
    for (Var x : xs) {
        if (val(x).rows() != rows) throw DimensionError("concat_cols: row mismatch");
        cols += val(x).cols();
        needs = needs || nodes_[x].needs_grad;
    }
    Node n;
    n.op = Op::ConcatCols;
    n.idx.assign(xs.begin(), xs.end());
    n.needs_grad = needs;
    n.value = Tensor(rows, cols);
    int off = 0;
    for (Var x : xs) {
        const Tensor& X = val(x);
        for (int r = 0; r < rows; ++r)
            std::copy(X.row(r), X.row(r) + X.cols(), n.value.row(r) + off);
        off += X.cols();
    }
    return push(std::move(n));
}

Tape::Var Tape::concat_rows(std::span<const Var> xs) {
    if (xs.empty()) throw DimensionError("concat_rows: empty input");
    const int cols = val(xs[0]).cols();
    int rows = 0;
    bool needs = false;
    for (Var x : xs) {
        if (val(x).cols() != cols) throw DimensionError("concat_rows: column mismatch");
        rows += val(x).rows();
        needs = needs || nodes_[x].needs_grad;
    }
    Node n;
    n.op = Op::ConcatRows;
    n.idx.assign(xs.begin(), xs.end());
    n.needs_grad = needs;
    n.value = Tensor(rows, cols);
    int off = 0;
    for (Var x : xs) {
        const Tensor& X = val(x);
        std::copy(X.v.begin(), X.v.end(), n.value.v.begin() + static_cast<std::size_t>(off) * cols);
        off += X.rows();
    }
    return push(std::move(n));
}

Tape::Var Tape::slice_cols(Var a, int lo, int hi) {
    const Tensor& A = val(a);
    if (lo < 0 || hi > A.cols() || lo >= hi) throw DimensionError("slice_cols: bad range");
    Node n;
    n.op = Op::SliceCols;
    n.a = a;
    n.idx = {lo, hi};
    n.needs_grad = nodes_[a].needs_grad;
    n.value = Tensor(A.rows(), hi - lo);
    for (int r = 0; r < A.rows(); ++r)
        std::copy(A.row(r) + lo, A.row(r) + hi, n.value.row(r));
    return push(std::move(n));
}

Tape::Var Tape::gather_rows(Var a, std::vector<int> rows) {
    const Tensor& A = val(a);
    for (int r : rows)
        if (r < 0 || r >= A.rows()) throw DimensionError("gather_rows: index out of range");
    Node n;
    n.op = Op::GatherRows;
    n.a = a;
    n.needs_grad = nodes_[a].needs_grad;
    n.value = Tensor(static_cast<int>(rows.size()), A.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(A.row(rows[i]), A.row(rows[i]) + A.cols(), n.value.row(static_cast<int>(i)));
    n.idx = std::move(rows);
    return push(std::move(n));
}

Tape::Var Tape::repeat_row(Var a, int times) {
    const Tensor& A = val(a);
    if (A.rows() != 1) throw DimensionError("repeat_row: input must be 1 x c");
    Node n;
    n.op = Op::RepeatRow;
    n.a = a;
    n.needs_grad = nodes_[a].needs_grad;
    n.value = Tensor(times, A.cols());
    for (int r = 0; r < times; ++r) std::copy(A.v.begin(), A.v.end(), n.value.row(r));
    return push(std::move(n));
}

Tape::Var Tape::mean_rows(Var a) {
    const Tensor& A = val(a);
    if (A.rows() < 1) throw DimensionError("mean_rows: empty input");
    Node n;
    n.op = Op::MeanRows;
    n.a = a;
    n.needs_grad = nodes_[a].needs_grad;
    n.value = Tensor(1, A.cols());
    for (int r = 0; r < A.rows(); ++r)
        for (int c = 0; c < A.cols(); ++c) n.value.v[c] += A.at(r, c);
    for (real& x : n.value.v) x /= A.rows();
    return push(std::move(n));
}

Tape::Var Tape::sum(Var a) {
    const Tensor& A = val(a);
    Node n;
    n.op = Op::Sum;
    n.a = a;
    n.needs_grad = nodes_[a].needs_grad;
    real total = 0;
    for (real x : A.v) total += x;
    n.value = Tensor::scalar(total);
    return push(std::move(n));
}

Tape::Var Tape::pick(Var a, int r, int c) {
    const Tensor& A = val(a);
    if (r < 0 || r >= A.rows() || c < 0 || c >= A.cols())
        throw DimensionError("pick: index out of range");
    Node n;
    n.op = Op::Pick;
    n.a = a;
    n.idx = {r, c};
    n.needs_grad = nodes_[a].needs_grad;
    n.value = Tensor::scalar(A.at(r, c));
    return push(std::move(n));
}

Tape::Var Tape::weighted_sum(std::span<const Var> xs, std::span<const real> w) {
    if (xs.size() != w.size()) throw DimensionError("weighted_sum: length mismatch");
    Node n;
    n.op = Op::WeightedSum;
    n.idx.assign(xs.begin(), xs.end());
    n.aux.assign(w.begin(), w.end());
    real total = 0;
    bool needs = false;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const Tensor& X = val(xs[i]);
        if (X.rows() != 1 || X.cols() != 1) throw DimensionError("weighted_sum: inputs must be 1 x 1");
        total += w[i] * X.v[0];
        needs = needs || nodes_[xs[i]].needs_grad;
    }
    n.needs_grad = needs;
    n.value = Tensor::scalar(total);
    return push(std::move(n));
}

void Tape::backward(Var loss, real seed) {
    if (backward_done_) throw ContractError("backward already ran on this tape");
    backward_done_ = true;
    const Tensor& L = val(loss);
    if (L.rows() != 1 || L.cols() != 1) throw DimensionError("backward: loss must be 1 x 1");
    grad(loss).v[0] += seed;
    for (int i = loss; i >= 0; --i) {
        if (nodes_[i].grad.v.empty() || !nodes_[i].needs_grad) continue;
        backward_node(i);
    }
}

void Tape::backward_node(int i) {
    Node& n = nodes_[i];
    const Tensor& G = n.grad;
    auto wants = [&](Var x) { return x >= 0 && nodes_[x].needs_grad; };
    switch (n.op) {
        case Op::Constant:
        case Op::Leaf:
            break;
        case Op::MatMul: {
            if (wants(n.a)) mm_nt_acc(G, val(n.b), grad(n.a));
            if (wants(n.b)) mm_tn_acc(val(n.a), G, grad(n.b));
            break;
        }
        case Op::MatMulNT: {
            if (wants(n.a)) mm_acc(G, val(n.b), grad(n.a));
            if (wants(n.b)) mm_tn_acc(G, val(n.a), grad(n.b));
            break;
        }
        case Op::Add: {
            for (Var x : {n.a, n.b}) {
                if (!wants(x)) continue;
                Tensor& g = grad(x);
                for (std::size_t j = 0; j < g.v.size(); ++j) g.v[j] += G.v[j];
            }
            break;
        }
        case Op::AddRowVec: {
            if (wants(n.a)) {
                Tensor& g = grad(n.a);
                for (std::size_t j = 0; j < g.v.size(); ++j) g.v[j] += G.v[j];
            }
            if (wants(n.b)) {
                Tensor& g = grad(n.b);
                for (int r = 0; r < G.rows(); ++r)
                    for (int c = 0; c < G.cols(); ++c) g.v[c] += G.at(r, c);
            }
            break;
        }
        case Op::Scale: {
            if (wants(n.a)) {
                Tensor& g = grad(n.a);
                for (std::size_t j = 0; j < g.v.size(); ++j) g.v[j] += n.scalar * G.v[j];
            }
            break;
        }
        case Op::Relu: {
            if (wants(n.a)) {
                Tensor& g = grad(n.a);
                const Tensor& X = val(n.a);
                for (std::size_t j = 0; j < g.v.size(); ++j)
                    if (X.v[j] > real(0)) g.v[j] += G.v[j];
            }
            break;
        }
        case Op::Tanh: {
            if (wants(n.a)) {
                Tensor& g = grad(n.a);
                const Tensor& Y = n.value;
                for (std::size_t j = 0; j < g.v.size(); ++j)
                    g.v[j] += (real(1) - Y.v[j] * Y.v[j]) * G.v[j];
            }
            break;
        }
        case Op::Log: {
            if (wants(n.a)) {
                Tensor& g = grad(n.a);
                const Tensor& X = val(n.a);
                for (std::size_t j = 0; j < g.v.size(); ++j) g.v[j] += G.v[j] / X.v[j];
            }
            break;
        }
        case Op::SoftmaxRows: {
            if (wants(n.a)) {
                Tensor& g = grad(n.a);
                const Tensor& P = n.value;
                const int cols = P.cols();
                for (int r = 0; r < P.rows(); ++r) {
                    const real* p = P.row(r);
                    const real* gy = G.row(r);
                    real dot = 0;
                    for (int c = 0; c < cols; ++c) dot += gy[c] * p[c];
                    real* gx = g.row(r);
                    for (int c = 0; c < cols; ++c) gx[c] += p[c] * (gy[c] - dot);
                }
            }
            break;
        }
        case Op::LayerNorm: {
            const Tensor& X = val(n.a);
            const int cols = X.cols();
            const real* gain = val(n.b).v.data();
            const real* xhat = n.aux.data();
            const real* inv_sigma = n.aux.data() + X.v.size();
            if (wants(n.a)) {
                Tensor& g = grad(n.a);
                for (int r = 0; r < X.rows(); ++r) {
                    const real* gy = G.row(r);
                    const real* xh = xhat + static_cast<std::size_t>(r) * cols;
                    real mean_ggy = 0, mean_ggy_xhat = 0;
                    for (int c = 0; c < cols; ++c) {
                        const real ggy = gy[c] * gain[c];
                        mean_ggy += ggy;
                        mean_ggy_xhat += ggy * xh[c];
                    }
                    mean_ggy /= cols;
                    mean_ggy_xhat /= cols;
                    real* gx = g.row(r);
                    for (int c = 0; c < cols; ++c) {
                        const real ggy = gy[c] * gain[c];
                        gx[c] += inv_sigma[r] * (ggy - mean_ggy - xh[c] * mean_ggy_xhat);
                    }
                }
            }
            if (wants(n.b)) {
                Tensor& g = grad(n.b);
                for (int r = 0; r < X.rows(); ++r) {
                    const real* gy = G.row(r);
                    const real* xh = xhat + static_cast<std::size_t>(r) * cols;
                    for (int c = 0; c < cols; ++c) g.v[c] += gy[c] * xh[c];
                }
            }
            if (wants(n.c)) {
                Tensor& g = grad(n.c);
                for (int r = 0; r < X.rows(); ++r) {
                    const real* gy = G.row(r);
                    for (int c = 0; c < cols; ++c) g.v[c] += gy[c];
                }
            }
            break;
        }
        case Op::ConcatCols: {
            int off = 0;
            for (int x : n.idx) {
                const int w = val(x).cols();
                if (wants(x)) {
                    Tensor& g = grad(x);
                    for (int r = 0; r < G.rows(); ++r)
                        for (int c = 0; c < w; ++c) g.at(r, c) += G.at(r, off + c);
                }
                off += w;
            }
            break;
        }
        case Op::ConcatRows: {
            int off = 0;
            for (int x : n.idx) {
                const int h = val(x).rows();
                if (wants(x)) {
                    Tensor& g = grad(x);
                    for (int r = 0; r < h; ++r)
                        for (int c = 0; c < G.cols(); ++c) g.at(r, c) += G.at(off + r, c);
                }
                off += h;
            }
            break;
        }
        case Op::SliceCols: {
            if (wants(n.a)) {
                Tensor& g = grad(n.a);
                const int lo = n.idx[0];
                for (int r = 0; r < G.rows(); ++r)
                    for (int c = 0; c < G.cols(); ++c) g.at(r, lo + c) += G.at(r, c);
            }
            break;
        }
        case Op::GatherRows: {
            if (wants(n.a)) {
                Tensor& g = grad(n.a);
                for (std::size_t r = 0; r < n.idx.size(); ++r)
                    for (int c = 0; c < G.cols(); ++c)
                        g.at(n.idx[r], c) += G.at(static_cast<int>(r), c);
            }
            break;
        }
        case Op::RepeatRow: {
            if (wants(n.a)) {
                Tensor& g = grad(n.a);
                for (int r = 0; r < G.rows(); ++r)
                    for (int c = 0; c < G.cols(); ++c) g.v[c] += G.at(r, c);
            }
            break;
        }
        case Op::MeanRows: {
            if (wants(n.a)) {
                Tensor& g = grad(n.a);
                const real inv = real(1) / val(n.a).rows();
                for (int r = 0; r < g.rows(); ++r)
                    for (int c = 0; c < g.cols(); ++c) g.at(r, c) += inv * G.v[c];
            }
            break;
        }
        case Op::Sum: {
            if (wants(n.a)) {
                Tensor& g = grad(n.a);
                for (real& x : g.v) x += G.v[0];
            }
            break;
        }
        case Op::Pick: {
            if (wants(n.a)) grad(n.a).at(n.idx[0], n.idx[1]) += G.v[0];
            break;
        }
        case Op::WeightedSum: {
            for (std::size_t j = 0; j < n.idx.size(); ++j)
                if (wants(n.idx[j])) grad(n.idx[j]).v[0] += n.aux[j] * G.v[0];
            break;
        }
    }
}

void Tape::flush_leaf_grads() {
    for (Node& n : nodes_) {
        if (n.op != Op::Leaf || n.grad.v.empty()) continue;
        for (std::size_t i = 0; i < n.grad.v.size(); ++i) n.param->grad.v[i] += n.grad.v[i];
    }
}

Tape::Var linear(Tape& t, Tape::Var x, Tape::Var W, Tape::Var b) {
    Tape::Var y = t.matmul(x, W);
    return b >= 0 ? t.add_rowvec(y, b) : y;
}

Tape::Var ffn(Tape& t, Tape::Var x, Tape::Var W1, Tape::Var W2) {
    return t.matmul(t.relu(t.matmul(x, W1)), W2);
}

Tape::Var mha(Tape& t, Tape::Var q, Tape::Var k, Tape::Var v, const MhaVars& p, int heads,
              const std::vector<std::uint8_t>* mask) {
    const int d = t.val(q).cols();
    if (d % heads != 0) throw DimensionError("mha: heads must divide the embedding width");
    const int dk = d / heads;
    const real inv_scale = real(1) / std::sqrt(static_cast<real>(dk));
    Tape::Var Q = t.matmul(q, p.wq);
    Tape::Var K = t.matmul(k, p.wk);
    Tape::Var V = t.matmul(v, p.wv);
    std::vector<Tape::Var> outs;
    outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        Tape::Var Qh = t.slice_cols(Q, h * dk, (h + 1) * dk);
        Tape::Var Kh = t.slice_cols(K, h * dk, (h + 1) * dk);
        Tape::Var Vh = t.slice_cols(V, h * dk, (h + 1) * dk);
        Tape::Var scores = t.scale(t.matmul_nt(Qh, Kh), inv_scale);
        Tape::Var attn = t.softmax_rows(scores, mask);
        outs.push_back(t.matmul(attn, Vh));
    }
    return t.matmul(t.concat_cols(outs), p.wo);
}

double grad_check(const std::function<double(bool)>& f, std::span<Parameter* const> params,
                  double eps) {
    for (Parameter* p : params) p->zero_grad();
    f(true);
    std::vector<std::vector<real>> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad.v);

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter* p = params[pi];
        for (std::size_t i = 0; i < p->value.v.size(); ++i) {
            const real saved = p->value.v[i];
            p->value.v[i] = saved + static_cast<real>(eps);
            const double up = f(false);
            p->value.v[i] = saved - static_cast<real>(eps);
            const double down = f(false);
            p->value.v[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double exact = analytic[pi][i];
            const double err = std::abs(exact - numeric) /
                               std::max(1e-8, std::abs(exact) + std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace nd
}  // namespace pvrp
