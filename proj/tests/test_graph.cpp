// Reverse-mode gradients checked against central finite differences in
// double precision, op by op and through composite graphs.

#include "doctest.h"

#include <cmath>
#include <functional>
#include <vector>

#include "motionlab/graph.hpp"
#include "motionlab/rng.hpp"

namespace ml = motionlab;
using ml::MatD;
using ml::ad::Graph;
using ml::ad::Var;

namespace {

MatD random_mat(int r, int c, ml::Rng& rng, double scale = 1.0) {
    MatD m(r, c);
    for (size_t i = 0; i < m.size(); ++i) m.at(i) = scale * rng.normal();
    return m;
}

// Builds the graph twice per probed element: analytic gradient from one
// backward pass, numeric gradient from central differences on the loss.
using Builder = std::function<Var(Graph<double>&, const std::vector<Var>&)>;

void check_gradients(const Builder& build, std::vector<MatD> params, double tol = 1e-6) {
    auto eval = [&](const std::vector<MatD>& ps) {
        Graph<double> g(false);
        std::vector<Var> vars;
        vars.reserve(ps.size());
        for (const MatD& p : ps) vars.push_back(g.param(p, nullptr));
        Var loss = build(g, vars);
        return g.value(loss)(0, 0);
    };

    std::vector<MatD> sinks;
    for (const MatD& p : params) sinks.emplace_back(p.rows, p.cols);
    {
        Graph<double> g(true);
        std::vector<Var> vars;
        for (size_t k = 0; k < params.size(); ++k) vars.push_back(g.param(params[k], &sinks[k]));
        Var loss = build(g, vars);
        g.backward(loss);
    }

    const double h = 1e-5;
    for (size_t k = 0; k < params.size(); ++k) {
        for (size_t i = 0; i < params[k].size(); ++i) {
            double keep = params[k].at(i);
            params[k].at(i) = keep + h;
            double up = eval(params);
            params[k].at(i) = keep - h;
            double dn = eval(params);
            params[k].at(i) = keep;
            double fd = (up - dn) / (2 * h);
            double an = sinks[k].at(i);
            CHECK(std::abs(an - fd) <= tol + 1e-4 * std::abs(fd));
        }
    }
}

Var to_scalar(Graph<double>& g, Var x) {
    MatD zero(g.value(x).rows, g.value(x).cols);
    return g.mse_to(x, zero);
}

}  // namespace

TEST_CASE("matrix product gradients match finite differences") {
    ml::Rng rng(11);
    check_gradients(
        [](Graph<double>& g, const std::vector<Var>& p) {
            return to_scalar(g, g.matmul(p[0], p[1]));
        },
        {random_mat(3, 4, rng), random_mat(4, 2, rng)});
    check_gradients(
        [](Graph<double>& g, const std::vector<Var>& p) {
            return to_scalar(g, g.matmul_nt(p[0], p[1]));
        },
        {random_mat(3, 4, rng), random_mat(5, 4, rng)});
}

TEST_CASE("elementwise op gradients match finite differences") {
    ml::Rng rng(12);
    check_gradients(
        [](Graph<double>& g, const std::vector<Var>& p) {
            return to_scalar(g, g.add(p[0], p[1]));
        },
        {random_mat(2, 3, rng), random_mat(2, 3, rng)});
    check_gradients(
        [](Graph<double>& g, const std::vector<Var>& p) {
            return to_scalar(g, g.sub(p[0], p[1]));
        },
        {random_mat(2, 3, rng), random_mat(2, 3, rng)});
    check_gradients(
        [](Graph<double>& g, const std::vector<Var>& p) {
            return to_scalar(g, g.hadamard(p[0], p[1]));
        },
        {random_mat(2, 3, rng), random_mat(2, 3, rng)});
    check_gradients(
        [](Graph<double>& g, const std::vector<Var>& p) {
            return to_scalar(g, g.scale(p[0], -1.7));
        },
        {random_mat(2, 3, rng)});
    check_gradients(
        [](Graph<double>& g, const std::vector<Var>& p) {
            return to_scalar(g, g.add_rowvec(p[0], p[1]));
        },
        {random_mat(4, 3, rng), random_mat(1, 3, rng)});
    ml::Rng crng(13);
    MatD c = random_mat(2, 3, crng);
    check_gradients(
        [c](Graph<double>& g, const std::vector<Var>& p) {
            return to_scalar(g, g.add_const(p[0], c));
        },
        {random_mat(2, 3, rng)});
    check_gradients(
        [](Graph<double>& g, const std::vector<Var>& p) {
            return to_scalar(g, g.scale_by(p[0], p[1]));
        },
        {random_mat(3, 4, rng), random_mat(1, 1, rng)});
}

TEST_CASE("gelu gradient matches finite differences") {
    ml::Rng rng(14);
    check_gradients(
        [](Graph<double>& g, const std::vector<Var>& p) { return to_scalar(g, g.gelu(p[0])); },
        {random_mat(3, 5, rng, 2.0)});
}

TEST_CASE("layer norm gradients match finite differences") {
    ml::Rng rng(15);
    check_gradients(
        [](Graph<double>& g, const std::vector<Var>& p) {
            return to_scalar(g, g.layer_norm(p[0], p[1], p[2], 1e-5));
        },
        {random_mat(4, 6, rng), random_mat(1, 6, rng), random_mat(1, 6, rng)});
}

TEST_CASE("softmax gradient matches finite differences") {
    ml::Rng rng(16);
    // Weight the rows asymmetrically so the Jacobian's off-diagonal terms
    // are exercised, not just the mean-preserving direction.
    ml::Rng wrng(17);
    MatD w = random_mat(3, 5, wrng);
    check_gradients(
        [w](Graph<double>& g, const std::vector<Var>& p) {
            Var sm = g.softmax_rows(p[0]);
            Var weighted = g.hadamard(sm, g.input(w));
            return to_scalar(g, weighted);
        },
        {random_mat(3, 5, rng, 2.0)});
}

TEST_CASE("slice and concat gradients match finite differences") {
    ml::Rng rng(18);
    check_gradients(
        [](Graph<double>& g, const std::vector<Var>& p) {
            Var s1 = g.slice_cols(p[0], 1, 3);
            Var s2 = g.slice_rows(p[0], 0, 2);
            Var joined = g.concat_cols({s2, g.slice_rows(s1, 0, 2)});
            return to_scalar(g, joined);
        },
        {random_mat(4, 5, rng)});
    check_gradients(
        [](Graph<double>& g, const std::vector<Var>& p) {
            Var joined = g.concat_rows({p[0], p[1]});
            return to_scalar(g, joined);
        },
        {random_mat(2, 3, rng), random_mat(4, 3, rng)});
}

TEST_CASE("gather accumulates gradients for repeated rows") {
    ml::Rng rng(19);
    check_gradients(
        [](Graph<double>& g, const std::vector<Var>& p) {
            return to_scalar(g, g.gather_rows(p[0], {2, 0, 2, 2, 1}));
        },
        {random_mat(4, 3, rng)});

    // Row double-counted by the ids must receive exactly twice the
    // single-use gradient of an identical row.
    MatD table(3, 2);
    table(0, 0) = 0.3;
    table(0, 1) = -0.4;
    table.map().row(1) = table.map().row(0);
    table(2, 0) = 1.0;
    MatD sink(3, 2);
    Graph<double> g(true);
    Var t = g.param(table, &sink);
    Var picked = g.gather_rows(t, {0, 1, 1});
    g.backward(to_scalar(g, picked));
    CHECK(sink(1, 0) == doctest::Approx(2.0 * sink(0, 0)));
    CHECK(sink(1, 1) == doctest::Approx(2.0 * sink(0, 1)));
}

TEST_CASE("scalar reductions match finite differences") {
    ml::Rng rng(20);
    ml::Rng trng(21);
    MatD target = random_mat(3, 4, trng);
    check_gradients(
        [target](Graph<double>& g, const std::vector<Var>& p) {
            return g.mse_to(p[0], target);
        },
        {random_mat(3, 4, rng)});
    check_gradients(
        [target](Graph<double>& g, const std::vector<Var>& p) {
            Var l1 = g.mse_to(p[0], target);
            Var l2 = to_scalar(g, g.gelu(p[1]));
            Var l3 = to_scalar(g, p[0]);
            return g.mean_scalars({l1, l2, l3});
        },
        {random_mat(3, 4, rng), random_mat(2, 2, rng)});
}

TEST_CASE("composite transformer-style graph matches finite differences") {
    ml::Rng rng(22);
    // Attention-shaped composite: projections, scaled scores, softmax,
    // value mix, residual add, layer norm, gelu MLP, mse loss.
    check_gradients(
        [](Graph<double>& g, const std::vector<Var>& p) {
            Var x = p[0];
            Var q = g.matmul(x, p[1]);
            Var k = g.matmul(x, p[2]);
            Var v = g.matmul(x, p[3]);
            Var scores = g.scale(g.matmul_nt(q, k), 1.0 / std::sqrt(4.0));
            Var attn = g.matmul(g.softmax_rows(scores), v);
            Var res = g.add(x, attn);
            Var normed = g.layer_norm(res, p[4], p[5], 1e-5);
            Var hidden = g.gelu(g.matmul(normed, p[6]));
            MatD target(3, 4, 0.25);
            return g.mse_to(g.matmul(hidden, p[7]), target);
        },
        {random_mat(3, 4, rng), random_mat(4, 4, rng), random_mat(4, 4, rng),
         random_mat(4, 4, rng), random_mat(1, 4, rng), random_mat(1, 4, rng),
         random_mat(4, 6, rng), random_mat(6, 4, rng)},
        2e-6);
}

TEST_CASE("gradient sinks accumulate across graphs and ignore inputs") {
    MatD w(2, 2);
    w(0, 0) = 0.5;
    w(1, 1) = -1.0;
    MatD sink(2, 2);

    auto run_once = [&]() {
        Graph<double> g(true);
        Var p = g.param(w, &sink);
        Var x = g.input(MatD(2, 2, 1.0));
        Var prod = g.matmul(p, x);
        g.backward(to_scalar(g, prod));
    };
    run_once();
    MatD after_one = sink;
    run_once();
    for (size_t i = 0; i < sink.size(); ++i)
        CHECK(sink.at(i) == doctest::Approx(2.0 * after_one.at(i)));

    // Non-recording graphs compute identical forward values.
    Graph<double> ginf(false);
    Var p = ginf.param(w, nullptr);
    Var x = ginf.input(MatD(2, 2, 1.0));
    Var prod = ginf.matmul(p, x);
    Graph<double> grec(true);
    MatD s2(2, 2);
    Var p2 = grec.param(w, &s2);
    Var x2 = grec.input(MatD(2, 2, 1.0));
    Var prod2 = grec.matmul(p2, x2);
    for (size_t i = 0; i < ginf.value(prod).size(); ++i)
        CHECK(ginf.value(prod).at(i) == grec.value(prod2).at(i));
}
