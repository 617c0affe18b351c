#include "doctest.h"

#include <cmath>
#include <numeric>
#include <vector>

#include "lc/errors.hpp"
#include "lc/loss.hpp"
#include "lc/rng.hpp"

using namespace lc;

namespace {

LossTask make_task(LossFamily fam, std::size_t n, std::size_t d, std::uint64_t seed,
                   std::size_t hidden = 3, std::size_t classes = 3, double l2 = 0.0) {
    LossTask t;
    t.family = fam;
    t.n = n;
    t.d = d;
    t.hidden = fam == LossFamily::MlpXent ? hidden : 0;
    t.classes = fam == LossFamily::MlpXent ? classes : 0;
    t.l2_reg = l2;
    Rng rng(mix_seed(seed, 0xFEED));
    t.X.resize(n * d);
    for (auto& x : t.X) x = rng.normal();
    t.y.resize(n);
    for (auto& v : t.y) {
        switch (fam) {
            case LossFamily::LeastSquares: v = rng.normal(); break;
            case LossFamily::Logistic: v = rng.uniform() < 0.5 ? 0.0 : 1.0; break;
            case LossFamily::MlpXent: v = static_cast<double>(rng.index(classes)); break;
        }
    }
    return t;
}

// independent straightforward loss re-implementations used as oracles
double naive_ls_loss(const LossTask& t, const WeightVector& w) {
    double total = 0;
    for (std::size_t i = 0; i < t.n; ++i) {
        double pred = w.values[t.d];
        for (std::size_t j = 0; j < t.d; ++j) pred += w.values[j] * t.X[i * t.d + j];
        total += 0.5 * (pred - t.y[i]) * (pred - t.y[i]);
    }
    double sq = 0;
    for (double v : w.values) sq += v * v;
    return total + 0.5 * t.l2_reg * sq;
}

double naive_logistic_loss(const LossTask& t, const WeightVector& w) {
    double total = 0;
    for (std::size_t i = 0; i < t.n; ++i) {
        double z = w.values[t.d];
        for (std::size_t j = 0; j < t.d; ++j) z += w.values[j] * t.X[i * t.d + j];
        double p = 1.0 / (1.0 + std::exp(-z));
        total += -(t.y[i] * std::log(p) + (1.0 - t.y[i]) * std::log(1.0 - p));
    }
    double sq = 0;
    for (double v : w.values) sq += v * v;
    return total + 0.5 * t.l2_reg * sq;
}

} // namespace

TEST_CASE("least-squares exact interpolation scores zero") {
    LossTask t;
    t.family = LossFamily::LeastSquares;
    t.X = {1, 2};
    t.y = {1, 2};
    t.n = 2;
    t.d = 1;
    WeightVector w;
    w.layout = expected_layout(t);
    w.values = {1.0, 0.0}; // slope 1, bias 0
    w.mask = {1, 0};
    CHECK(loss_eval(t, w) == 0.0);
}

TEST_CASE("least-squares uses half squared residuals, summed") {
    LossTask t;
    t.family = LossFamily::LeastSquares;
    t.X = {1};
    t.y = {0};
    t.n = 1;
    t.d = 1;
    WeightVector w;
    w.layout = expected_layout(t);
    w.values = {1.0, 0.0};
    w.mask = {1, 0};
    CHECK(loss_eval(t, w) == doctest::Approx(0.5)); // half of 1^2
}

TEST_CASE("logistic loss matches an independent cross-entropy sum") {
    for (std::uint64_t seed : {1, 2, 3}) {
        LossTask t = make_task(LossFamily::Logistic, 10, 4, seed);
        WeightVector w = make_initial_weights(t, seed + 100);
        double got = loss_eval(t, w);
        double want = naive_logistic_loss(t, w);
        CHECK(std::fabs(got - want) <= 1e-12 * std::max(1.0, std::fabs(want)));
    }
}

TEST_CASE("least-squares loss matches an independent re-implementation") {
    for (std::uint64_t seed : {4, 5, 6}) {
        LossTask t = make_task(LossFamily::LeastSquares, 10, 4, seed, 3, 3, 0.3);
        WeightVector w = make_initial_weights(t, seed + 100);
        double got = loss_eval(t, w);
        double want = naive_ls_loss(t, w);
        CHECK(std::fabs(got - want) <= 1e-12 * std::max(1.0, std::fabs(want)));
    }
}

TEST_CASE("gradients match central finite differences for every family") {
    for (auto fam : {LossFamily::LeastSquares, LossFamily::Logistic, LossFamily::MlpXent}) {
        for (std::uint64_t seed : {10, 11, 12, 13, 14}) {
            LossTask t = make_task(fam, 12, 4, seed, 3, 3, seed % 2 ? 0.1 : 0.0);
            WeightVector w = make_initial_weights(t, seed);
            GradientReport rep = grad_check(t, w);
            INFO("family ", family_name(fam), " seed ", seed, " worst index ", rep.worst_index);
            CHECK(rep.max_rel_err < 1e-5);
        }
    }
}

TEST_CASE("gradient is zero at an exact least-squares fit") {
    LossTask t;
    t.family = LossFamily::LeastSquares;
    t.X = {1, 2, -1};
    t.y = {1.5, 2.5, -0.5};
    t.n = 3;
    t.d = 1; // y = x + 0.5 exactly
    WeightVector w;
    w.layout = expected_layout(t);
    w.values = {1.0, 0.5};
    w.mask = {1, 0};
    auto g = loss_grad(t, w);
    for (double v : g) CHECK(std::fabs(v) < 1e-12);
    // near-zero gradients fall back to the absolute threshold
    GradientReport rep = grad_check(t, w);
    CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("quadratic gradient is linear in w") {
    LossTask t = make_task(LossFamily::LeastSquares, 8, 3, 21);
    WeightVector w1 = make_initial_weights(t, 1);
    WeightVector w2 = make_initial_weights(t, 2);
    WeightVector zero = w1, sum = w1;
    for (auto& v : zero.values) v = 0.0;
    for (std::size_t i = 0; i < sum.values.size(); ++i) sum.values[i] = w1.values[i] + w2.values[i];
    auto g1 = loss_grad(t, w1), g2 = loss_grad(t, w2), g0 = loss_grad(t, zero),
         gs = loss_grad(t, sum);
    for (std::size_t i = 0; i < gs.size(); ++i)
        CHECK(g1[i] + g2[i] - g0[i] == doctest::Approx(gs[i]).epsilon(1e-10));
}

TEST_CASE("full batch equals loss_grad bitwise") {
    LossTask t = make_task(LossFamily::Logistic, 9, 3, 33, 3, 3, 0.2);
    WeightVector w = make_initial_weights(t, 3);
    std::vector<std::size_t> all(t.n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    auto a = loss_grad(t, w);
    auto b = minibatch_grad(t, w, all);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("disjoint batches add up to the full gradient") {
    for (auto fam : {LossFamily::LeastSquares, LossFamily::Logistic, LossFamily::MlpXent}) {
        LossTask t = make_task(fam, 10, 3, 44, 2, 3, 0.5);
        WeightVector w = make_initial_weights(t, 4);
        std::vector<std::size_t> lo = {0, 1, 2, 3}, hi = {4, 5, 6, 7, 8, 9};
        auto gl = minibatch_grad(t, w, lo);
        auto gh = minibatch_grad(t, w, hi);
        auto g = loss_grad(t, w);
        for (std::size_t i = 0; i < g.size(); ++i) {
            double s = gl[i] + gh[i];
            CHECK(std::fabs(s - g[i]) <= 1e-12 * std::max(1.0, std::fabs(g[i])));
        }
    }
}

TEST_CASE("singleton batches accumulate to the full gradient") {
    LossTask t = make_task(LossFamily::LeastSquares, 20, 4, 55);
    WeightVector w = make_initial_weights(t, 5);
    std::vector<double> acc(w.size(), 0.0);
    for (std::size_t i = 0; i < t.n; ++i) {
        std::vector<std::size_t> one = {i};
        auto gi = minibatch_grad(t, w, one);
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += gi[j];
    }
    auto g = loss_grad(t, w);
    for (std::size_t j = 0; j < g.size(); ++j)
        CHECK(std::fabs(acc[j] - g[j]) <= 1e-10 * std::max(1.0, std::fabs(g[j])));
}

TEST_CASE("batch preconditions") {
    LossTask t = make_task(LossFamily::LeastSquares, 5, 2, 66);
    WeightVector w = make_initial_weights(t, 6);
    std::vector<std::size_t> empty, bad = {5};
    CHECK_THROWS_AS(minibatch_grad(t, w, empty), ConfigError);
    CHECK_THROWS_AS(minibatch_grad(t, w, bad), ConfigError);
}

TEST_CASE("lipschitz bound on the worked 1x1 design") {
    LossTask t;
    t.family = LossFamily::LeastSquares;
    t.X = {1};
    t.y = {0};
    t.n = 1;
    t.d = 1;
    // Gram with bias column is [[1,1],[1,1]], top eigenvalue 2
    CHECK(lipschitz_bound(t) == doctest::Approx(2.0).epsilon(1e-12));
    t.family = LossFamily::Logistic;
    t.y = {0};
    CHECK(lipschitz_bound(t) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("input scaling scales the least-squares bound by at most c^2") {
    LossTask t = make_task(LossFamily::LeastSquares, 15, 4, 77);
    double m1 = lipschitz_bound(t);
    const double c = 3.0;
    LossTask ts = t;
    for (auto& x : ts.X) x *= c;
    double m2 = lipschitz_bound(ts);
    CHECK(m2 >= m1 * (1.0 - 1e-12));
    CHECK(m2 <= m1 * c * c * (1.0 + 1e-12));
}

TEST_CASE("l2 regularization shifts the bound by exactly rho") {
    LossTask t = make_task(LossFamily::LeastSquares, 12, 3, 88);
    double m0 = lipschitz_bound(t);
    t.l2_reg = 0.73;
    CHECK(lipschitz_bound(t) == doctest::Approx(m0 + 0.73).epsilon(1e-14));
}

TEST_CASE("mlp has no closed-form bound") {
    LossTask t = make_task(LossFamily::MlpXent, 6, 3, 99);
    CHECK_THROWS_AS(lipschitz_bound(t), ConfigError);
}

TEST_CASE("grad_check localizes an injected fault") {
    LossTask t = make_task(LossFamily::LeastSquares, 8, 3, 111);
    WeightVector w = make_initial_weights(t, 11);
    // corrupt one coordinate of the analytic gradient by evaluating a shifted task:
    // simplest faithful variant: verify that the clean report is far below the
    // threshold, then check a hand-computed corrupted comparison would flag index 2
    GradientReport clean = grad_check(t, w);
    CHECK(clean.max_rel_err < 1e-7);
    auto g = loss_grad(t, w);
    g[2] += 1.0;
    // recompute the worst index the same way grad_check does
    std::size_t worst = 0;
    double worst_err = 0;
    WeightVector probe = w;
    for (std::size_t i = 0; i < w.size(); ++i) {
        double h = 1e-6 * (1.0 + std::fabs(w.values[i]));
        probe.values[i] = w.values[i] + h;
        double fp = loss_eval(t, probe);
        probe.values[i] = w.values[i] - h;
        double fm = loss_eval(t, probe);
        probe.values[i] = w.values[i];
        double fd = 0.5 * (fp - fm) / h;
        double err = std::fabs(g[i] - fd) / std::max({std::fabs(g[i]), std::fabs(fd), 1e-3});
        if (err > worst_err) {
            worst_err = err;
            worst = i;
        }
    }
    CHECK(worst == 2);
    CHECK(worst_err > 0.1);
}

TEST_CASE("loss rejects non-finite weights with a point index") {
    LossTask t = make_task(LossFamily::LeastSquares, 4, 2, 123);
    WeightVector w = make_initial_weights(t, 12);
    w.values[0] = HUGE_VAL;
    CHECK_THROWS_AS(loss_eval(t, w), NumericError);
}

TEST_CASE("validation rejects bad targets") {
    LossTask t = make_task(LossFamily::Logistic, 5, 2, 321);
    t.y[3] = 0.5;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    LossTask m = make_task(LossFamily::MlpXent, 5, 2, 321, 2, 3);
    m.y[1] = 3; // classes = 3, valid indices 0..2
    CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("initial weights: layout, zero biases, free-bias mask") {
    LossTask t = make_task(LossFamily::MlpXent, 6, 4, 222, 3, 2);
    WeightVector w = make_initial_weights(t, 9);
    w.validate();
    REQUIRE(w.layout.size() == 4);
    CHECK(w.layout[0].rows == 3); // hidden x d
    CHECK(w.layout[0].cols == 4);
    CHECK(w.layout[2].rows == 2); // classes x hidden
    std::size_t b1 = w.block_offset("b1");
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(w.values[b1 + i] == 0.0);
        CHECK(w.mask[b1 + i] == 0);
    }
    CHECK(w.mask[0] == 1);
    WeightVector w2 = make_initial_weights(t, 9);
    CHECK(w.values == w2.values); // deterministic per seed
    WeightVector w3 = make_initial_weights(t, 10);
    CHECK(w.values != w3.values);
}

TEST_CASE("reference trainer solves a noiseless linear task") {
    Rng rng(404);
    LossTask t;
    t.family = LossFamily::LeastSquares;
    t.n = 30;
    t.d = 4;
    t.X.resize(t.n * t.d);
    for (auto& x : t.X) x = rng.normal();
    std::vector<double> gen = {0.5, -1.0, 2.0, 0.25};
    t.y.resize(t.n);
    for (std::size_t i = 0; i < t.n; ++i) {
        double z = 0.7;
        for (std::size_t j = 0; j < t.d; ++j) z += gen[j] * t.X[i * t.d + j];
        t.y[i] = z;
    }
    TrainOptions opts;
    opts.seed = 5;
    TrainResult res = train_reference(t, opts);
    CHECK(res.converged);
    CHECK(res.loss < 1e-10);
    CHECK(res.loss <= loss_eval(t, make_initial_weights(t, 5)));
}

TEST_CASE("reference sgd trains the mlp to a lower loss than init") {
    LossTask t = make_task(LossFamily::MlpXent, 40, 3, 500, 4, 3);
    TrainOptions opts;
    opts.seed = 6;
    opts.epochs = 40;
    opts.batch_size = 8;
    TrainResult res = train_reference(t, opts);
    double init_loss = loss_eval(t, make_initial_weights(t, 6));
    CHECK(res.loss < init_loss);
    CHECK(std::isfinite(res.grad_norm));
}

TEST_CASE("least-squares loss is exactly quadratic along any ray") {
    LossTask t = make_task(LossFamily::LeastSquares, 10, 3, 777);
    WeightVector w = make_initial_weights(t, 7);
    WeightVector dir = make_initial_weights(t, 8);
    auto at = [&](double s) {
        WeightVector p = w;
        for (std::size_t i = 0; i < p.values.size(); ++i) p.values[i] += s * dir.values[i];
        return loss_eval(t, p);
    };
    // fit a parabola through s = 0, 1, 2 and check s = 5
    double f0 = at(0), f1 = at(1), f2 = at(2);
    double a2 = (f2 - 2 * f1 + f0) / 2.0;
    double a1 = f1 - f0 - a2;
    double predicted = f0 + a1 * 5 + a2 * 25;
    CHECK(std::fabs(predicted - at(5)) <= 1e-10 * std::max(1.0, std::fabs(at(5))));
}
