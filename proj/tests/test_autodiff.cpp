// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#include "splatseg/autodiff.hpp"
#include "splatseg/gradcheck.hpp"
#include "splatseg/parallel.hpp"
#include "splatseg/rng.hpp"

#include "common.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace splatseg;
using oracles::random_tensor;

TEST_SUITE_BEGIN("autodiff");

namespace {

/// Reduces an op output to a scalar through a fixed random weighting so
/// every output coordinate influences the loss.
ad::Value weighted_sum(ad::Graph& g, ad::Value v, uint64_t seed)
{
    const ad::Tensor& t = g.value(v);
    Rng rng(seed);
    ad::Tensor w(t.shape);
    for (double& x : w.data) x = rng.uniform(-1.0, 1.0);
    return g.sum(g.mul(v, g.constant(std::move(w))));
}

void check_op(const ad::LossBuilder& build, const std::vector<ad::Tensor>& leaves,
    uint64_t seed = 0)
{
    ad::GradCheckOptions opt;
    opt.seed = seed;
    const ad::GradCheckReport rep = ad::grad_check(build, leaves, opt);
    INFO("worst: " << rep.worst << " rel " << rep.max_rel_err);
    CHECK(rep.pass);
    CHECK(rep.checked > 0);
}

} // namespace

TEST_CASE("matmul matches the naive oracle")
{
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 1 + int(rng.uniformInt(6));
        const int k = 1 + int(rng.uniformInt(6));
        const int m = 1 + int(rng.uniformInt(6));
        const ad::Tensor a = random_tensor({n, k}, rng, false);
        const ad::Tensor b = random_tensor({k, m}, rng, false);
        ad::Graph g;
        const ad::Tensor& c = g.value(g.matmul(g.constant(a), g.constant(b)));
        const std::vector<double> ref = oracles::naive_matmul(a.data, b.data, n, k, m);
        for (size_t i = 0; i < ref.size(); ++i)
            CHECK(c.data[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("matmul gradient")
{
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(100 + seed);
        const std::vector<ad::Tensor> leaves
            = {random_tensor({4, 3}, rng), random_tensor({3, 5}, rng)};
        check_op([seed](ad::Graph& g, const std::vector<ad::Value>& v) {
            return weighted_sum(g, g.matmul(v[0], v[1]), seed);
        },
            leaves, seed);
    }
}

TEST_CASE("matvec gradient")
{
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(200 + seed);
        const std::vector<ad::Tensor> leaves
            = {random_tensor({5, 3}, rng), random_tensor({3}, rng)};
        check_op([seed](ad::Graph& g, const std::vector<ad::Value>& v) {
            return weighted_sum(g, g.matvec(v[0], v[1]), seed);
        },
            leaves, seed);
    }
}

TEST_CASE("add and mul gradients, same shape and scalar broadcast")
{
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(300 + seed);
        const std::vector<ad::Tensor> leaves = {random_tensor({3, 4}, rng),
            random_tensor({3, 4}, rng), random_tensor({}, rng)};
        check_op([seed](ad::Graph& g, const std::vector<ad::Value>& v) {
            const ad::Value s = g.add(g.mul(v[0], v[1]), g.mul(v[1], v[2]));
            return weighted_sum(g, g.add(s, v[2]), seed);
        },
            leaves, seed);
    }
}

TEST_CASE("add_rowvec gradient")
{
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(400 + seed);
        const std::vector<ad::Tensor> leaves
            = {random_tensor({4, 3}, rng), random_tensor({3}, rng)};
        check_op([seed](ad::Graph& g, const std::vector<ad::Value>& v) {
            return weighted_sum(g, g.add_rowvec(v[0], v[1]), seed);
        },
            leaves, seed);
    }
}

TEST_CASE("mul_scalar and relu gradients")
{
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(500 + seed);
        const std::vector<ad::Tensor> leaves = {random_tensor({4, 4}, rng)};
        check_op([seed](ad::Graph& g, const std::vector<ad::Value>& v) {
            return weighted_sum(g, g.relu(g.mul_scalar(v[0], -1.7)), seed);
        },
            leaves, seed);
    }
}

TEST_CASE("concat gradients on both axes")
{
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(600 + seed);
        const std::vector<ad::Tensor> leaves = {random_tensor({2, 3}, rng),
            random_tensor({4, 3}, rng), random_tensor({2, 5}, rng)};
        check_op([seed](ad::Graph& g, const std::vector<ad::Value>& v) {
            const ad::Value rows = g.concat(v[0], v[1], 0); // (6,3)
            const ad::Value cols = g.concat(v[0], v[2], 1); // (2,8)
            return g.add(weighted_sum(g, rows, seed), weighted_sum(g, cols, seed + 1));
        },
            leaves, seed);
    }
}

TEST_CASE("gather and scatter gradients")
{
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(700 + seed);
        const std::vector<ad::Tensor> leaves = {random_tensor({5, 3}, rng)};
        check_op([seed](ad::Graph& g, const std::vector<ad::Value>& v) {
            const ad::Value picked = g.gather_rows(v[0], {4, 0, 0, 2});
            const ad::Value spread = g.scatter_add_rows(picked, {1, 6, 1, 3}, 7);
            return weighted_sum(g, spread, seed);
        },
            leaves, seed);
    }
}

TEST_CASE("row_softmax gradient and normalization")
{
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(800 + seed);
        const std::vector<ad::Tensor> leaves = {random_tensor({3, 5}, rng, true, -3.0, 3.0)};
        check_op([seed](ad::Graph& g, const std::vector<ad::Value>& v) {
            return weighted_sum(g, g.row_softmax(v[0]), seed);
        },
            leaves, seed);
    }
    ad::Graph g;
    Rng rng(808);
    const ad::Tensor& p = g.value(g.row_softmax(g.constant(random_tensor({4, 6}, rng, false))));
    for (int r = 0; r < 4; ++r) {
        double s = 0.0;
        for (int c = 0; c < 6; ++c) s += p.at(r, c);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("softmax_cross_entropy gradient, both reductions")
{
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(900 + seed);
        const std::vector<ad::Tensor> leaves = {random_tensor({4, 6}, rng, true, -2.0, 2.0)};
        const std::vector<int> targets = {int(rng.uniformInt(6)), int(rng.uniformInt(6)),
            int(rng.uniformInt(6)), int(rng.uniformInt(6))};
        check_op([targets](ad::Graph& g, const std::vector<ad::Value>& v) {
            const ad::Value m = g.softmax_cross_entropy(v[0], targets, ad::Reduction::Mean);
            const ad::Value s = g.softmax_cross_entropy(v[0], targets, ad::Reduction::Sum);
            return g.add(m, g.mul_scalar(s, 0.25));
        },
            leaves, seed);
    }
}

TEST_CASE("cross entropy equals the scalar oracle and ln M at uniform logits")
{
    Rng rng(42);
    const int rows = 5, classes = 7;
    ad::Tensor logits = random_tensor({rows, classes}, rng, false, -2.0, 2.0);
    std::vector<int> targets;
    for (int r = 0; r < rows; ++r) targets.push_back(int(rng.uniformInt(classes)));
    ad::Graph g;
    const double got
        = g.value(g.softmax_cross_entropy(g.constant(logits), targets, ad::Reduction::Mean))
              .value();
    double want = 0.0;
    for (int r = 0; r < rows; ++r) {
        std::vector<double> row(logits.data.begin() + r * classes,
            logits.data.begin() + (r + 1) * classes);
        want += oracles::scalar_cross_entropy(row, targets[r]);
    }
    want /= rows;
    CHECK(got == doctest::Approx(want).epsilon(1e-12));

    for (int m = 2; m <= 40; m += 7) {
        ad::Graph gu;
        const double loss = gu.value(gu.softmax_cross_entropy(
                                         gu.constant(ad::Tensor({1, m}, 0.37)), {0},
                                         ad::Reduction::Mean))
                                .value();
        CHECK(std::abs(loss - std::log(double(m))) < 1e-9);
    }
}

TEST_CASE("l2_normalize_rows and cosine_rows gradients")
{
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(1000 + seed);
        // keep rows away from the zero-norm guard
        std::vector<ad::Tensor> leaves
            = {random_tensor({4, 5}, rng, true, 0.3, 1.0), random_tensor({4, 5}, rng, true, 0.3, 1.0)};
        check_op([seed](ad::Graph& g, const std::vector<ad::Value>& v) {
            const ad::Value n = g.l2_normalize_rows(v[0]);
            const ad::Value c = g.cosine_rows(v[0], v[1]);
            return g.add(weighted_sum(g, n, seed), weighted_sum(g, c, seed + 1));
        },
            leaves, seed);
    }
}

TEST_CASE("cosine_rows matches the scalar oracle")
{
    Rng rng(77);
    const ad::Tensor a = random_tensor({6, 4}, rng, false);
    const ad::Tensor b = random_tensor({6, 4}, rng, false);
    ad::Graph g;
    const ad::Tensor& c = g.value(g.cosine_rows(g.constant(a), g.constant(b)));
    for (int r = 0; r < 6; ++r) {
        std::vector<double> ra(a.data.begin() + r * 4, a.data.begin() + (r + 1) * 4);
        std::vector<double> rb(b.data.begin() + r * 4, b.data.begin() + (r + 1) * 4);
        CHECK(c.data[size_t(r)] == doctest::Approx(oracles::scalar_cosine(ra, rb)).epsilon(1e-12));
    }
}

TEST_CASE("mean and sum gradients")
{
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(1100 + seed);
        const std::vector<ad::Tensor> leaves = {random_tensor({3, 7}, rng)};
        check_op([](ad::Graph& g, const std::vector<ad::Value>& v) {
            return g.add(g.mean(v[0]), g.mul_scalar(g.sum(v[0]), 0.1));
        },
            leaves, seed);
    }
}

TEST_CASE("custom op joins the tape")
{
    // elementwise square as a minimal custom op
    class SquareOp : public ad::CustomOp {
    public:
        const char* name() const override { return "square"; }
        ad::Tensor forward(const std::vector<const ad::Tensor*>& in) override
        {
            ad::Tensor out = *in[0];
            for (double& v : out.data) v *= v;
            return out;
        }
        void backward(const ad::Tensor& gradOut, const std::vector<const ad::Tensor*>& in,
            const ad::Tensor&, const std::vector<ad::Tensor*>& inputGrads) override
        {
            if (!inputGrads[0]) return;
            for (size_t i = 0; i < gradOut.data.size(); ++i)
                inputGrads[0]->data[i] += 2.0 * in[0]->data[i] * gradOut.data[i];
        }
    };
    for (uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(1200 + seed);
        const std::vector<ad::Tensor> leaves = {random_tensor({3, 3}, rng)};
        check_op([seed](ad::Graph& g, const std::vector<ad::Value>& v) {
            return weighted_sum(g, g.custom(std::make_shared<SquareOp>(), {v[0]}), seed);
        },
            leaves, seed);
    }
}

TEST_CASE("unused leaves report zero gradients")
{
    ad::Graph g;
    const ad::Value used = g.input(ad::Tensor({2, 2}, 1.0, true));
    const ad::Value unused = g.input(ad::Tensor({3}, 2.0, true));
    g.backward(g.sum(used));
    const ad::Tensor& gz = g.grad(unused);
    REQUIRE(gz.shape == std::vector<int>{3});
    for (double v : gz.data) CHECK(v == 0.0);
}

TEST_CASE("error paths")
{
    SUBCASE("matmul shape mismatch")
    {
        ad::Graph g;
        const ad::Value a = g.constant(ad::Tensor({2, 3}));
        const ad::Value b = g.constant(ad::Tensor({4, 2}));
        CHECK_THROWS_AS_KIND(g.matmul(a, b), ErrorKind::ShapeMismatch);
    }
    SUBCASE("gather out of range")
    {
        ad::Graph g;
        const ad::Value a = g.constant(ad::Tensor({2, 3}));
        CHECK_THROWS_AS_KIND(g.gather_rows(a, {0, 2}), ErrorKind::IndexOutOfRange);
    }
    SUBCASE("scatter out of range")
    {
        ad::Graph g;
        const ad::Value a = g.constant(ad::Tensor({2, 3}));
        CHECK_THROWS_AS_KIND(g.scatter_add_rows(a, {0, 4}, 3), ErrorKind::AssignOutOfRange);
    }
    SUBCASE("non-scalar loss")
    {
        ad::Graph g;
        const ad::Value a = g.input(ad::Tensor({2, 2}, 1.0, true));
        CHECK_THROWS_AS_KIND(g.backward(a), ErrorKind::NonScalarLoss);
    }
    SUBCASE("graph is single use")
    {
        ad::Graph g;
        const ad::Value a = g.input(ad::Tensor({2, 2}, 1.0, true));
        const ad::Value loss = g.sum(a);
        g.backward(loss);
        CHECK_THROWS_AS_KIND(g.backward(loss), ErrorKind::GraphConsumed);
        CHECK_THROWS_AS_KIND(g.sum(a), ErrorKind::GraphConsumed);
    }
    SUBCASE("mean of empty")
    {
        ad::Graph g;
        CHECK_THROWS_AS_KIND(g.mean(g.constant(ad::Tensor({0, 3}))), ErrorKind::ShapeMismatch);
    }
    SUBCASE("cross entropy target out of range")
    {
        ad::Graph g;
        const ad::Value a = g.constant(ad::Tensor({1, 3}));
        CHECK_THROWS_AS_KIND(g.softmax_cross_entropy(a, {3}, ad::Reduction::Mean),
            ErrorKind::IndexOutOfRange);
    }
}

TEST_CASE("results are identical at any thread count")
{
    auto runOnce = [] {
        Rng rng(4242);
        const ad::Tensor a = random_tensor({64, 33}, rng, true);
        const ad::Tensor b = random_tensor({33, 17}, rng, false);
        ad::Graph g;
        const ad::Value va = g.input(a);
        const ad::Value loss = g.mean(g.relu(g.matmul(va, g.constant(b))));
        g.backward(loss);
        std::vector<double> out = g.grad(va).data;
        out.push_back(g.value(loss).value());
        return out;
    };
    set_thread_count(1);
    const std::vector<double> one = runOnce();
    set_thread_count(5);
    const std::vector<double> five = runOnce();
    set_thread_count(1);
    REQUIRE(one.size() == five.size());
    for (size_t i = 0; i < one.size(); ++i) CHECK(one[i] == five[i]);
}

TEST_SUITE_END();
