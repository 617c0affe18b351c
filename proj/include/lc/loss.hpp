#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lc/weights.hpp"

namespace lc {

enum class LossFamily { LeastSquares, Logistic, MlpXent };

const char* family_name(LossFamily f);
LossFamily family_from_name(const std::string& s);

// Supervised task over a fixed dataset. X is n x d row-major. Targets are
// reals for least-squares, {0,1} labels for logistic, class indices for the
// one-hidden-layer tanh/softmax net. The l2 term (l2_reg/2)*|w|^2 covers the
// whole parameter vector and is split evenly across data points so that
// minibatch gradients stay additive.
struct LossTask {
    LossFamily family = LossFamily::LeastSquares;
    std::vector<double> X;
    std::vector<double> y;
    std::size_t n = 0;
    std::size_t d = 0;
    std::size_t hidden = 0;  // mlp only
    std::size_t classes = 0; // mlp only
    double l2_reg = 0.0;

    void validate() const;
};

std::vector<LayerBlock> expected_layout(const LossTask& task);

// random init matching the task layout; biases start at zero
WeightVector make_initial_weights(const LossTask& task, std::uint64_t seed);

double loss_eval(const LossTask& task, const WeightVector& w);
std::vector<double> loss_grad(const LossTask& task, const WeightVector& w);
// gradient of the partial sum over `batch`; disjoint batches add up to loss_grad
std::vector<double> minibatch_grad(const LossTask& task, const WeightVector& w,
                                   std::span<const std::size_t> batch);

// bound M on the gradient Lipschitz constant (convex families only)
double lipschitz_bound(const LossTask& task);

struct GradientReport {
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    double step_used = 0.0;
};

// central finite differences, step 1e-6*(1+|w_i|); relative error per
// coordinate with an absolute fallback once both gradients are near zero
GradientReport grad_check(const LossTask& task, const WeightVector& w);

struct TrainOptions {
    std::uint64_t seed = 0;
    long max_iters = 200000; // full-batch GD cap (convex families)
    double grad_tol = 1e-8;
    // SGD parameters (mlp family)
    double alpha = 0.2;
    double beta = 20.0;
    int epochs = 300;
    int batch_size = 10;
    long log_every = 0; // 0 disables the callback
    std::function<void(long iter, double loss, double grad_norm)> log;
};

struct TrainResult {
    WeightVector w;
    long iters = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
    bool converged = false;
};

// reference trainer: fixed-step 1/M gradient descent for the convex families,
// decaying-rate SGD for the mlp
TrainResult train_reference(const LossTask& task, const TrainOptions& opts);

} // namespace lc
