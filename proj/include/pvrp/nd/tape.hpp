#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pvrp/nd/tensor.hpp"

namespace pvrp {
namespace nd {

// Reverse-mode tape over 2-D tensors. Forward values are computed eagerly;
// backward() walks the nodes in reverse, dispatching on the op tag. A tape
// is single-threaded; independent tapes may run concurrently.
class Tape {
  public:
    using Var = int;

    Var constant(Tensor t);
    Var leaf(Parameter& p);  // snapshot of p.value; grads flow back via flush_leaf_grads()

    const Tensor& val(Var x) const { return nodes_[x].value; }
    const Tensor& grad_of(Var x) const { return nodes_[x].grad; }

    Var matmul(Var a, Var b);     // (r x k) * (k x c)
    Var matmul_nt(Var a, Var b);  // a * b^T
    Var add(Var a, Var b);        // same shape
    Var add_rowvec(Var a, Var b); // b is 1 x c, broadcast over rows of a
    Var scale(Var a, real s);
    Var relu(Var a);
    Var tanh(Var a);
    Var log(Var a);

    // Row softmax with optional boolean mask (true = keep). Masked logits get
    // a -1e9 additive sentinel; after normalization masked outputs are
    // written back to exactly 0. Throws ContractError on a fully masked row.
    Var softmax_rows(Var a, const std::vector<std::uint8_t>* mask = nullptr);

    // Per-row normalization to zero mean / unit variance (eps = 1e-5 inside
    // the square root), then elementwise gain and bias (1 x c each).
    Var layer_norm(Var x, Var gain, Var bias);

    Var concat_cols(std::span<const Var> xs);
    Var concat_rows(std::span<const Var> xs);
    Var slice_cols(Var a, int lo, int hi);     // [lo, hi)
    Var gather_rows(Var a, std::vector<int> rows);
    Var repeat_row(Var a, int times);          // a is 1 x c
    Var mean_rows(Var a);                      // 1 x c column means
    Var sum(Var a);                            // 1 x 1
    Var pick(Var a, int r, int c);             // 1 x 1
    Var weighted_sum(std::span<const Var> xs, std::span<const real> w);  // 1 x 1 inputs

    // Seeds d(loss)/d(loss) = seed and sweeps gradients down the tape. One
    // call per tape; combine several roots with weighted_sum() first.
    void backward(Var loss, real seed = real(1));

    // Adds every leaf's accumulated gradient into its Parameter::grad.
    void flush_leaf_grads();

    std::size_t node_count() const { return nodes_.size(); }

  private:
    enum class Op : std::uint8_t {
        Constant, Leaf, MatMul, MatMulNT, Add, AddRowVec, Scale, Relu, Tanh, Log,
        SoftmaxRows, LayerNorm, ConcatCols, ConcatRows, SliceCols, GatherRows,
        RepeatRow, MeanRows, Sum, Pick, WeightedSum,
    };

    struct Node {
        Op op;
        Tensor value;
        Tensor grad;               // sized lazily during backward
        int a = -1, b = -1, c = -1;
        real scalar = 0;
        std::vector<int> idx;      // op-specific: indices, input lists, masks
        std::vector<real> aux;     // op-specific: saved forwards, weights
        Parameter* param = nullptr;
        bool needs_grad = true;
    };

    Var push(Node n);
    Tensor& grad(Var x);
    void backward_node(int i);

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

// --- composite helpers (build on the primitive ops) ---

// y = x W (+ b). W is (in x out); optional b is 1 x out.
Tape::Var linear(Tape& t, Tape::Var x, Tape::Var W, Tape::Var b = -1);

// Two-layer perceptron W2 * relu(W1 * x), bias-free.
Tape::Var ffn(Tape& t, Tape::Var x, Tape::Var W1, Tape::Var W2);

struct MhaVars {
    Tape::Var wq, wk, wv, wo;  // each d_h x d_h
};

// Multi-head attention. q: (tq x d), k/v: (tk x d). Optional mask is
// (tq * tk) row-major, true = may attend. Heads must divide d.
Tape::Var mha(Tape& t, Tape::Var q, Tape::Var k, Tape::Var v, const MhaVars& p, int heads,
              const std::vector<std::uint8_t>* mask = nullptr);

// Central finite differences against tape gradients, max over all coordinates
// of |ga - gn| / max(1e-8, |ga| + |gn|). `f(with_grad)` must recompute the
// scalar loss; when with_grad it must also populate Parameter gradients.
double grad_check(const std::function<double(bool)>& f, std::span<Parameter* const> params,
                  double eps = 1e-6);

}  // namespace nd
}  // namespace pvrp
