#include <cmath>
#include <vector>

#include "cmda/autograd.hpp"
#include "cmda/gradcheck.hpp"
#include "cmda/losses.hpp"
#include "cmda/ops.hpp"
#include "doctest.h"
#include "test_oracles.hpp"

using namespace cmda;

namespace {

// Leaf with values bounded away from ReLU kinks so finite differences stay
// one-sided.
VarPtr smooth_leaf(Shape4 s, Rng& rng, const std::string& name) {
    Tensor4 t(s);
    for (auto& v : t.data) {
        v = rng.uniform(0.1, 1.0);
        if (rng.uniform01() < 0.5) v = -v;
    }
    return Var::leaf(std::move(t), true, name);
}

Tensor4 rand_weights(Shape4 s, Rng& rng) { return oracle::rand_tensor(s, rng, -1.0, 1.0); }

}  // namespace

TEST_SUITE_BEGIN("autograd");

TEST_CASE("leaf and constant flags") {
    VarPtr a = Var::leaf(Tensor4::scalar(1.0), true, "a");
    VarPtr c = Var::constant(Tensor4::scalar(2.0));
    CHECK(a->requires_grad());
    CHECK(!c->requires_grad());
    CHECK(a->parents().empty());
}

TEST_CASE("backward requires a scalar root") {
    VarPtr a = Var::leaf(Tensor4(Shape4{1, 1, 1, 3}, 1.0), true, "a");
    VarPtr y = relu(a);
    CHECK_THROWS_AS(backward(y), ContractError);
}

TEST_CASE("gradient accumulates through shared subexpressions") {
    VarPtr a = Var::leaf(Tensor4::scalar(3.0), true, "a");
    VarPtr y = add(a, a);  // dy/da = 2
    backward(y);
    CHECK(a->grad().data[0] == doctest::Approx(2.0));
    // Without zero_grad a second backward accumulates on top.
    VarPtr y2 = scale(a, 5.0);
    backward(y2);
    CHECK(a->grad().data[0] == doctest::Approx(7.0));
    a->zero_grad();
    CHECK(!a->has_grad());
}

TEST_CASE("no-grad mode drops the tape") {
    VarPtr a = Var::leaf(Tensor4::scalar(1.0), true, "a");
    {
        NoGradGuard ng;
        VarPtr y = scale(a, 2.0);
        CHECK(y->parents().empty());
        CHECK(!y->requires_grad());
    }
    VarPtr y = scale(a, 2.0);
    CHECK(y->parents().size() == 1);
}

TEST_CASE("set_requires_grad only on leaves") {
    VarPtr a = Var::leaf(Tensor4::scalar(1.0), true, "a");
    VarPtr y = scale(a, 2.0);
    CHECK_THROWS_AS(y->set_requires_grad(true), ContractError);
    a->set_requires_grad(false);
    VarPtr y2 = scale(a, 2.0);
    backward(y2);
    CHECK(!a->has_grad());
}

TEST_CASE("grad check: conv2d") {
    Rng rng(11);
    ConvSpec spec{2, 3, 3, 3, 1, 1, 1};
    VarPtr x = smooth_leaf(Shape4{2, 2, 5, 5}, rng, "x");
    VarPtr w = smooth_leaf(spec.weight_shape(), rng, "w");
    VarPtr b = smooth_leaf(Shape4{1, 3, 1, 1}, rng, "b");
    Tensor4 proj = rand_weights(spec.out_shape(x->value.shape), rng);
    auto report = grad_check([&] { return weighted_sum(conv2d(x, w, b, spec), proj); },
                             {x, w, b}, 1e-3, 1e-4, 40);
    CAPTURE(report.worst);
    CAPTURE(report.max_rel_err);
    CHECK(report.pass);
}

TEST_CASE("grad check: strided dilated conv2d") {
    Rng rng(12);
    ConvSpec spec{2, 2, 3, 3, 2, 2, 2};
    VarPtr x = smooth_leaf(Shape4{1, 2, 9, 9}, rng, "x");
    VarPtr w = smooth_leaf(spec.weight_shape(), rng, "w");
    VarPtr b = smooth_leaf(Shape4{1, 2, 1, 1}, rng, "b");
    Tensor4 proj = rand_weights(spec.out_shape(x->value.shape), rng);
    auto report = grad_check([&] { return weighted_sum(conv2d(x, w, b, spec), proj); },
                             {x, w, b}, 1e-3, 1e-4, 40);
    CAPTURE(report.worst);
    CHECK(report.pass);
}

TEST_CASE("grad check: deconv2x") {
    Rng rng(13);
    VarPtr x = smooth_leaf(Shape4{1, 3, 4, 4}, rng, "x");
    VarPtr w = smooth_leaf(Shape4{3, 2, 2, 2}, rng, "w");
    VarPtr b = smooth_leaf(Shape4{1, 2, 1, 1}, rng, "b");
    Tensor4 proj = rand_weights(Shape4{1, 2, 8, 8}, rng);
    auto report = grad_check([&] { return weighted_sum(deconv2x(x, w, b), proj); },
                             {x, w, b}, 1e-3, 1e-4, 40);
    CAPTURE(report.worst);
    CHECK(report.pass);
}

TEST_CASE("grad check: relu away from the kink") {
    Rng rng(14);
    VarPtr x = smooth_leaf(Shape4{2, 3, 4, 4}, rng, "x");
    Tensor4 proj = rand_weights(x->value.shape, rng);
    auto report = grad_check([&] { return weighted_sum(relu(x), proj); }, {x}, 1e-3, 1e-4, 40);
    CHECK(report.pass);
}

TEST_CASE("grad check: softmax_channel") {
    Rng rng(15);
    VarPtr x = smooth_leaf(Shape4{2, 4, 3, 3}, rng, "x");
    Tensor4 proj = rand_weights(x->value.shape, rng);
    auto report =
        grad_check([&] { return weighted_sum(softmax_channel(x), proj); }, {x}, 1e-3, 1e-4, 40);
    CAPTURE(report.worst);
    CHECK(report.pass);
}

TEST_CASE("grad check: pooling and arithmetic") {
    Rng rng(16);
    VarPtr a = smooth_leaf(Shape4{2, 2, 4, 4}, rng, "a");
    VarPtr b = smooth_leaf(Shape4{2, 2, 4, 4}, rng, "b");
    Tensor4 proj_p = rand_weights(Shape4{2, 2, 2, 2}, rng);
    auto pool = grad_check([&] { return weighted_sum(adaptive_avg_pool(a, 2, 2), proj_p); },
                           {a}, 1e-3, 1e-4, 0);
    CHECK(pool.pass);
    Tensor4 proj_g = rand_weights(Shape4{2, 2, 1, 1}, rng);
    auto gap = grad_check([&] { return weighted_sum(global_avg_pool(a), proj_g); }, {a});
    CHECK(gap.pass);
    auto arith = grad_check(
        [&] { return mean_all(sub(scale(add(a, b), 1.7), neg(b))); }, {a, b}, 1e-3, 1e-4, 30);
    CHECK(arith.pass);
}

TEST_CASE("grad check: concat_channels") {
    Rng rng(17);
    VarPtr a = smooth_leaf(Shape4{1, 2, 3, 3}, rng, "a");
    VarPtr b = smooth_leaf(Shape4{1, 3, 3, 3}, rng, "b");
    Tensor4 proj = rand_weights(Shape4{1, 5, 3, 3}, rng);
    auto report =
        grad_check([&] { return weighted_sum(concat_channels({a, b}), proj); }, {a, b});
    CHECK(report.pass);
}

TEST_CASE("grad check: weighted cross-entropy") {
    Rng rng(18);
    VarPtr logits = smooth_leaf(Shape4{2, 4, 3, 3}, rng, "logits");
    LabelBatch labels(2, 3, 3);
    for (auto& v : labels.data) v = static_cast<uint8_t>(rng.uniform_int(0, 3));
    std::vector<double> cw = {0.5, 1.0, 2.0, 1.5};
    auto report = grad_check(
        [&] { return weighted_ce(softmax_channel(logits), labels, cw); }, {logits}, 1e-3, 1e-4,
        40);
    CAPTURE(report.worst);
    CHECK(report.pass);
}

TEST_CASE("grad check: soft dice") {
    Rng rng(19);
    VarPtr logits = smooth_leaf(Shape4{2, 4, 3, 3}, rng, "logits");
    LabelBatch labels(2, 3, 3);
    for (auto& v : labels.data) v = static_cast<uint8_t>(rng.uniform_int(0, 3));
    auto report = grad_check([&] { return soft_dice(softmax_channel(logits), labels); },
                             {logits}, 1e-3, 1e-4, 40);
    CAPTURE(report.worst);
    CHECK(report.pass);
}

TEST_CASE("grad check: composite conv-relu-softmax-ce") {
    Rng rng(20);
    ConvSpec spec{2, 3, 3, 3, 1, 1, 1};
    VarPtr x = smooth_leaf(Shape4{1, 2, 4, 4}, rng, "x");
    VarPtr w = smooth_leaf(spec.weight_shape(), rng, "w");
    VarPtr b = smooth_leaf(Shape4{1, 3, 1, 1}, rng, "b");
    LabelBatch labels(1, 4, 4);
    for (auto& v : labels.data) v = static_cast<uint8_t>(rng.uniform_int(0, 2));
    std::vector<double> cw = {1.0, 1.0, 1.0};
    auto report = grad_check(
        [&] {
            VarPtr probs = softmax_channel(relu(conv2d(x, w, b, spec)));
            return add(weighted_ce(probs, labels, cw), soft_dice(probs, labels));
        },
        {x, w, b}, 1e-3, 2e-4, 30);
    CAPTURE(report.worst);
    CAPTURE(report.max_rel_err);
    CHECK(report.pass);
}

TEST_SUITE_END();
