#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pvrp/errors.hpp"
#include "pvrp/nd/adam.hpp"
#include "pvrp/nd/checkpoint.hpp"
#include "pvrp/nd/tape.hpp"

using namespace pvrp;
using nd::Parameter;
using nd::Tape;
using nd::Tensor;

namespace {

Tensor random_tensor(int r, int c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    return Tensor::uniform(r, c, rng, lo, hi);
}

}  // namespace

TEST_CASE("linear: identity weights, zero inputs, naive matmul oracle") {
    Tape t;
    Tensor w(3, 3);
    for (int i = 0; i < 3; ++i) w.at(i, i) = 1.0;
    const Tensor x = random_tensor(2, 3, 1);
    Tape::Var y = nd::linear(t, t.constant(x), t.constant(w));
    for (std::size_t i = 0; i < x.v.size(); ++i) CHECK(t.val(y).v[i] == x.v[i]);

    // zero input: zero output and zero gradient into the weights
    Parameter W("w", random_tensor(3, 2, 2));
    Tape t2;
    Tape::Var y2 = nd::linear(t2, t2.constant(Tensor(4, 3)), t2.leaf(W));
    for (double v : t2.val(y2).v) CHECK(v == 0.0);
    t2.backward(t2.sum(y2));
    t2.flush_leaf_grads();
    for (double g : W.grad.v) CHECK(g == 0.0);

    // random case against a naive triple loop
    const Tensor a = random_tensor(3, 4, 3);
    const Tensor b = random_tensor(4, 2, 4);
    Tape t3;
    const Tensor& prod = t3.val(t3.matmul(t3.constant(a), t3.constant(b)));
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 2; ++j) {
            double naive = 0.0;
            for (int p = 0; p < 4; ++p) naive += a.at(i, p) * b.at(p, j);
            CHECK(prod.at(i, j) == doctest::Approx(naive).epsilon(1e-15));
        }
    }
}

TEST_CASE("linear with bias broadcasts over rows") {
    Tape t;
    const Tensor x = random_tensor(3, 2, 5);
    const Tensor w = random_tensor(2, 2, 6);
    Tensor b(1, 2);
    b.v = {0.5, -0.25};
    Tape::Var y = nd::linear(t, t.constant(x), t.constant(w), t.constant(b));
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 2; ++c) {
            double naive = b.v[c];
            for (int p = 0; p < 2; ++p) naive += x.at(r, p) * w.at(p, c);
            CHECK(t.val(y).at(r, c) == doctest::Approx(naive).epsilon(1e-15));
        }
}

TEST_CASE("linear shape mismatch raises a dimension error") {
    Tape t;
    CHECK_THROWS_AS(t.matmul(t.constant(Tensor(2, 3)), t.constant(Tensor(4, 2))), DimensionError);
}

TEST_CASE("softmax rows: uniform, overflow-safe, masked") {
    Tape t;
    Tensor z(1, 3);
    const Tensor& p = t.val(t.softmax_rows(t.constant(z)));
    for (double v : p.v) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));

    Tensor big = Tensor::from_rows(1, 2, {1000.0, 0.0});
    const Tensor& q = t.val(t.softmax_rows(t.constant(big)));
    CHECK(q.v[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(q.v[1] >= 0.0);
    CHECK(std::isfinite(q.v[0]));

    Tensor equal = Tensor::from_rows(1, 2, {0.7, 0.7});
    std::vector<std::uint8_t> mask = {1, 0};
    const Tensor& r = t.val(t.softmax_rows(t.constant(equal), &mask));
    CHECK(r.v[0] == 1.0);
    CHECK(r.v[1] == 0.0);  // exactly

    std::vector<std::uint8_t> none = {0, 0};
    CHECK_THROWS_AS(t.softmax_rows(t.constant(equal), &none), ContractError);
}

TEST_CASE("softmax rows sum to one with masked entries exactly zero") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const int cols = 2 + static_cast<int>(rng.below(8));
        Tensor z = Tensor::uniform(3, cols, rng, -15.0, 15.0);
        std::vector<std::uint8_t> mask(3 * cols, 0);
        for (int r = 0; r < 3; ++r) {
            int kept = 0;
            for (int c = 0; c < cols; ++c) {
                mask[r * cols + c] = rng.bernoulli(0.7) ? 1 : 0;
                kept += mask[r * cols + c];
            }
            if (kept == 0) mask[r * cols] = 1;
        }
        Tape t;
        const Tensor& p = t.val(t.softmax_rows(t.constant(z), &mask));
        for (int r = 0; r < 3; ++r) {
            double sum = 0.0;
            for (int c = 0; c < cols; ++c) {
                if (!mask[r * cols + c]) CHECK(p.at(r, c) == 0.0);
                sum += p.at(r, c);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("layer norm: constant row collapses to the bias") {
    Tape t;
    Tensor x(2, 4);
    for (double& v : x.v) v = 3.7;
    Tensor gain(1, 4), bias(1, 4);
    for (int c = 0; c < 4; ++c) {
        gain.v[c] = 2.0;
        bias.v[c] = 0.25 * c;
    }
    const Tensor& y = t.val(t.layer_norm(t.constant(x), t.constant(gain), t.constant(bias)));
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 4; ++c) CHECK(y.at(r, c) == bias.v[c]);
}

TEST_CASE("layer norm: already normalized rows pass through (gain 1, bias 0)") {
    Tape t;
    Tensor x = Tensor::from_rows(1, 4, {-1.0, 1.0, -1.0, 1.0});  // mean 0, variance 1
    Tensor gain(1, 4), bias(1, 4);
    for (double& g : gain.v) g = 1.0;
    const Tensor& y = t.val(t.layer_norm(t.constant(x), t.constant(gain), t.constant(bias)));
    for (int c = 0; c < 4; ++c) CHECK(y.v[c] == doctest::Approx(x.v[c]).epsilon(1e-5));
}

TEST_CASE("layer norm: random rows have zero mean before the affine map") {
    Tape t;
    const Tensor x = random_tensor(5, 8, 123, -3.0, 3.0);
    Tensor gain(1, 8), bias(1, 8);
    for (double& g : gain.v) g = 1.0;
    const Tensor& y = t.val(t.layer_norm(t.constant(x), t.constant(gain), t.constant(bias)));
    for (int r = 0; r < 5; ++r) {
        double mean = 0.0;
        for (int c = 0; c < 8; ++c) mean += y.at(r, c);
        CHECK(std::abs(mean / 8) < 1e-12);
    }
}

TEST_CASE("ffn: zero input, fully negative preactivations, naive recomputation") {
    const Tensor w1 = random_tensor(3, 5, 7);
    const Tensor w2 = random_tensor(5, 2, 8);
    Tape t;
    Tape::Var y = nd::ffn(t, t.constant(Tensor(2, 3)), t.constant(w1), t.constant(w2));
    for (double v : t.val(y).v) CHECK(v == 0.0);

    // drive every hidden unit negative: relu output, then the result, is zero
    Tensor ones(1, 3);
    for (double& v : ones.v) v = 1.0;
    Tensor neg(3, 5);
    for (double& v : neg.v) v = -0.5;
    Tape t2;
    Tape::Var y2 = nd::ffn(t2, t2.constant(ones), t2.constant(neg), t2.constant(w2));
    for (double v : t2.val(y2).v) CHECK(v == 0.0);

    const Tensor x = random_tensor(2, 3, 9);
    Tape t3;
    const Tensor& got = t3.val(nd::ffn(t3, t3.constant(x), t3.constant(w1), t3.constant(w2)));
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            double naive = 0.0;
            for (int h = 0; h < 5; ++h) {
                double pre = 0.0;
                for (int i = 0; i < 3; ++i) pre += x.at(r, i) * w1.at(i, h);
                naive += std::max(0.0, pre) * w2.at(h, c);
            }
            CHECK(got.at(r, c) == doctest::Approx(naive).epsilon(1e-13));
        }
}

TEST_CASE("mha: singleton key gets weight one regardless of scale") {
    nd::MhaVars p;
    Tape t;
    p.wq = t.constant(random_tensor(4, 4, 11));
    p.wk = t.constant(random_tensor(4, 4, 12));
    p.wv = t.constant(random_tensor(4, 4, 13));
    p.wo = t.constant(random_tensor(4, 4, 14));
    const Tensor q = random_tensor(1, 4, 15, -5.0, 5.0);
    const Tensor kv = random_tensor(1, 4, 16, -5.0, 5.0);
    Tape::Var qv = t.constant(q);
    Tape::Var kvv = t.constant(kv);
    Tape::Var out = nd::mha(t, qv, kvv, kvv, p, 2);
    // weight 1 on the only key: output is v * Wv * Wo
    Tape::Var expect = t.matmul(t.matmul(kvv, p.wv), p.wo);
    for (std::size_t i = 0; i < t.val(out).v.size(); ++i)
        CHECK(t.val(out).v[i] == doctest::Approx(t.val(expect).v[i]).epsilon(1e-14));
}

TEST_CASE("mha: zero values give zero output") {
    nd::MhaVars p;
    Tape t;
    p.wq = t.constant(random_tensor(4, 4, 21));
    p.wk = t.constant(random_tensor(4, 4, 22));
    p.wv = t.constant(random_tensor(4, 4, 23));
    p.wo = t.constant(random_tensor(4, 4, 24));
    Tape::Var q = t.constant(random_tensor(2, 4, 25));
    Tape::Var v = t.constant(Tensor(3, 4));
    Tape::Var k = t.constant(random_tensor(3, 4, 26));
    Tape::Var out = nd::mha(t, q, k, v, p, 2);
    for (double x : t.val(out).v) CHECK(x == 0.0);
}

TEST_CASE("mha: zero queries attend uniformly") {
    nd::MhaVars p;
    Tape t;
    p.wq = t.constant(random_tensor(4, 4, 31));
    p.wk = t.constant(random_tensor(4, 4, 32));
    p.wv = t.constant(random_tensor(4, 4, 33));
    p.wo = t.constant(random_tensor(4, 4, 34));
    Tape::Var q = t.constant(Tensor(1, 4));  // zero query -> equal logits over 4 keys
    Tape::Var kv = t.constant(random_tensor(4, 4, 35));
    Tape::Var out = nd::mha(t, q, kv, kv, p, 2);
    Tape::Var expect = t.matmul(t.mean_rows(t.matmul(kv, p.wv)), p.wo);
    for (std::size_t i = 0; i < t.val(out).v.size(); ++i)
        CHECK(t.val(out).v[i] == doctest::Approx(t.val(expect).v[i]).epsilon(1e-13));
}

TEST_CASE("mha is permutation-equivariant over keys and values") {
    nd::MhaVars p;
    Tape t;
    p.wq = t.constant(random_tensor(6, 6, 41));
    p.wk = t.constant(random_tensor(6, 6, 42));
    p.wv = t.constant(random_tensor(6, 6, 43));
    p.wo = t.constant(random_tensor(6, 6, 44));
    const Tensor q = random_tensor(2, 6, 45);
    const Tensor kv = random_tensor(5, 6, 46);
    std::vector<std::uint8_t> mask = {1, 1, 0, 1, 1,
                                      1, 0, 1, 1, 1};
    Tape::Var out = nd::mha(t, t.constant(q), t.constant(kv), t.constant(kv), p, 3, &mask);

    const std::vector<int> perm = {3, 0, 4, 2, 1};
    Tensor kvp(5, 6);
    std::vector<std::uint8_t> maskp(10);
    for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 6; ++c) kvp.at(r, c) = kv.at(perm[r], c);
        maskp[r] = mask[perm[r]];
        maskp[5 + r] = mask[5 + perm[r]];
    }
    Tape::Var outp = nd::mha(t, t.constant(q), t.constant(kvp), t.constant(kvp), p, 3, &maskp);
    for (std::size_t i = 0; i < t.val(out).v.size(); ++i)
        CHECK(t.val(out).v[i] == doctest::Approx(t.val(outp).v[i]).epsilon(1e-12));
}

TEST_CASE("mha rejects a head count that does not divide the width") {
    nd::MhaVars p;
    Tape t;
    p.wq = p.wk = p.wv = p.wo = t.constant(random_tensor(4, 4, 51));
    Tape::Var q = t.constant(random_tensor(2, 4, 52));
    CHECK_THROWS_AS(nd::mha(t, q, q, q, p, 3), DimensionError);
}

TEST_CASE("grad check: quadratic, linear layer, composed graph") {
    // f(w) = w^2 at w = 3: analytic gradient 6
    Parameter w("w", Tensor::scalar(3.0));
    auto quad = [&](bool with_grad) {
        Tape t;
        Tape::Var wv = t.leaf(w);
        Tape::Var loss = t.matmul(wv, wv);
        if (with_grad) {
            t.backward(loss);
            t.flush_leaf_grads();
        }
        return static_cast<double>(t.val(loss).v[0]);
    };
    Parameter* wp[] = {&w};
    CHECK(nd::grad_check(quad, wp) < 1e-9);
    CHECK(w.grad.v[0] == doctest::Approx(6.0).epsilon(1e-12));

    Parameter W("W", random_tensor(4, 3, 61));
    const Tensor x = random_tensor(2, 4, 62);
    auto lin = [&](bool with_grad) {
        Tape t;
        Tape::Var y = nd::linear(t, t.constant(x), t.leaf(W));
        Tape::Var loss = t.sum(t.tanh(y));
        if (with_grad) {
            t.backward(loss);
            t.flush_leaf_grads();
        }
        return static_cast<double>(t.val(loss).v[0]);
    };
    Parameter* Wp[] = {&W};
    CHECK(nd::grad_check(lin, Wp) < 1e-9);
}

TEST_CASE("grad check: every primitive in one composed graph") {
    Parameter a("a", random_tensor(3, 4, 71, 0.2, 1.2));
    Parameter b("b", random_tensor(4, 4, 72, -1.0, -0.1));
    Parameter gain("g", random_tensor(1, 4, 73, 0.5, 1.5));
    Parameter bias("bi", random_tensor(1, 4, 74));
    std::vector<std::uint8_t> mask = {1, 1, 0, 1,
                                      1, 0, 1, 1,
                                      0, 1, 1, 1};
    auto f = [&](bool with_grad) {
        Tape t;
        Tape::Var av = t.leaf(a);
        Tape::Var bv = t.leaf(b);
        Tape::Var mm = t.matmul(av, bv);                    // 3x4
        Tape::Var ln = t.layer_norm(mm, t.leaf(gain), t.leaf(bias));
        Tape::Var act = t.relu(t.scale(ln, 0.9));
        Tape::Var sm = t.softmax_rows(t.tanh(act), &mask);
        Tape::Var lp = t.log(t.pick(sm, 1, 0));
        const Tape::Var cat_in[] = {av, t.matmul_nt(sm, bv)};
        Tape::Var cat = t.concat_cols(cat_in);              // 3x8
        Tape::Var sl = t.slice_cols(cat, 2, 7);
        Tape::Var gr = t.gather_rows(sl, {2, 0, 2});
        Tape::Var mr = t.mean_rows(gr);
        Tape::Var rep = t.repeat_row(mr, 2);
        const Tape::Var rows_in[] = {rep, t.add(rep, rep)};
        Tape::Var rows = t.concat_rows(rows_in);
        Tape::Var total = t.sum(rows);
        const Tape::Var parts[] = {total, lp};
        const nd::real weights[] = {0.7, 1.3};
        Tape::Var loss = t.weighted_sum(parts, weights);
        if (with_grad) {
            t.backward(loss);
            t.flush_leaf_grads();
        }
        return static_cast<double>(t.val(loss).v[0]);
    };
    Parameter* ps[] = {&a, &b, &gain, &bias};
    CHECK(nd::grad_check(f, ps) < 1e-5);
}

TEST_CASE("no NaN or Inf on bounded inputs across ops") {
    Rng rng(321);
    for (int trial = 0; trial < 20; ++trial) {
        Tape t;
        Tensor x = Tensor::uniform(4, 6, rng, -1e3, 1e3);
        Tape::Var xv = t.constant(x);
        Tensor g(1, 6), bvec(1, 6);
        for (double& v : g.v) v = 1.0;
        std::vector<Tape::Var> outs = {
            t.tanh(xv),
            t.relu(xv),
            t.softmax_rows(xv),
            t.layer_norm(xv, t.constant(g), t.constant(bvec)),
            t.matmul_nt(xv, xv),
            t.mean_rows(xv),
        };
        for (Tape::Var o : outs)
            for (double v : t.val(o).v) CHECK(std::isfinite(v));
    }
}

TEST_CASE("adam: zero gradient leaves parameters untouched") {
    Parameter w("w", random_tensor(2, 2, 81));
    const Tensor before = w.value;
    Parameter* ps[] = {&w};
    nd::AdamState adam(ps);
    nd::adam_step(ps, adam, 0.001);
    for (std::size_t i = 0; i < before.v.size(); ++i) CHECK(w.value.v[i] == before.v[i]);
}

TEST_CASE("adam: first step moves by about -lr, second matches the recursion") {
    Parameter w("w", Tensor::scalar(1.0));
    Parameter* ps[] = {&w};
    nd::AdamState adam(ps);
    const double lr = 0.001;

    w.grad.v[0] = 1.0;
    nd::adam_step(ps, adam, lr);
    // bias-corrected first step: -lr * 1 / (1 + eps)
    const double expected1 = 1.0 - lr * (1.0 / (1.0 + 1e-8));
    CHECK(w.value.v[0] == doctest::Approx(expected1).epsilon(1e-12));

    w.grad.v[0] = 1.0;
    nd::adam_step(ps, adam, lr);
    // hand recursion, step 2 with g = 1 twice
    const double m2 = 0.9 * 0.1 + 0.1;             // = 0.19
    const double v2 = 0.999 * 0.001 + 0.001;       // = 0.001999
    const double mhat = m2 / (1.0 - 0.81);
    const double vhat = v2 / (1.0 - 0.999 * 0.999);
    const double expected2 = expected1 - lr * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(w.value.v[0] == doctest::Approx(expected2).epsilon(1e-12));
}

TEST_CASE("checkpoints reload bit-exactly") {
    Parameter a("alpha", random_tensor(3, 5, 91, -2.0, 2.0));
    Parameter b("beta", random_tensor(1, 7, 92, -0.1, 0.1));
    Parameter* ps[] = {&a, &b};
    nlohmann::ordered_json meta;
    meta["note"] = "test";
    const std::string path = "/tmp/pvrp_ckpt_test.json";
    nd::save_params(path, ps, meta);

    const Tensor va = a.value, vb = b.value;
    for (double& x : a.value.v) x = 0.0;
    for (double& x : b.value.v) x = 0.0;
    const auto meta_back = nd::load_params(path, ps);
    CHECK(meta_back["note"] == "test");
    for (std::size_t i = 0; i < va.v.size(); ++i) CHECK(a.value.v[i] == va.v[i]);
    for (std::size_t i = 0; i < vb.v.size(); ++i) CHECK(b.value.v[i] == vb.v[i]);

    Parameter wrong("alpha", Tensor(3, 4));
    Parameter* wp[] = {&wrong};
    CHECK_THROWS_AS(nd::load_params(path, wp), LoadError);
}
