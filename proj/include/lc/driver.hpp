#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lc/compress.hpp"
#include "lc/loss.hpp"
#include "lc/schedule.hpp"

namespace lc {

enum class Method { QP, AL };

const char* method_name(Method m);
Method method_from_name(const std::string& s);

enum class LStepKind { FixedStepGd, Sgd };

struct LCConfig {
    Method method = Method::AL;
    std::optional<double> mu0;            // default scales with the reference loss
    double a = 1.4;                       // mu multiplier per outer iteration
    int max_outer = 200;
    std::optional<double> constraint_tol; // default 1e-6 * sqrt(masked count)
    std::optional<LStepKind> lstep;       // default: fixed-step GD when convex, else SGD
    int inner_iters = 100;                // fixed-step GD budget per L step
    double alpha = 0.2;                   // SGD schedule
    double beta = 20.0;
    int epochs = 5;                       // SGD epochs per L step
    int batch_size = 10;
    int steps_per_mu = 1;                 // (L,C) pairs per mu value
    bool update_multipliers = true;       // AL only; false pins lambda at zero
    std::uint64_t seed = 0;
};

struct MetricsRecord {
    int k = 0;
    double mu = 0.0;
    double loss_w = 0.0;
    double loss_compressed = 0.0;
    double constraint_norm = 0.0;
    double lambda_norm = 0.0;
    long lstep_iters_used = 0;
    double wallclock_ms = 0.0;
};

struct LCState {
    WeightVector w;
    CompressedParams theta;
    std::vector<double> lambda;
    double mu = 0.0;
    int k = 0;
    std::vector<MetricsRecord> history;
};

struct LCResult {
    LCState state;
    WeightVector compressed; // the deliverable: decompressed theta over the final w
    bool converged = false;
    bool stuck_at_dc = false;
    double mu0_used = 0.0;
    double tol_used = 0.0;
};

// penalty and augmented-Lagrangian objectives at (w, theta)
double qp_value(const LossTask& task, const CompressionScheme& scheme, const WeightVector& w,
                const CompressedParams& theta, double mu);
double al_value(const LossTask& task, const CompressionScheme& scheme, const WeightVector& w,
                const CompressedParams& theta, std::span<const double> lambda, double mu);

struct LStepResult {
    WeightVector w;
    long iters = 0;
    std::vector<double> q_trace; // objective after each step (fixed-step GD only)
};

// minimize L(w) + mu/2 |w_masked - target|^2 by gradient descent with step
// 1/(M + mu); the objective must not increase
LStepResult l_step_fixed(const LossTask& task, const WeightVector& w0,
                         std::span<const double> target, double mu, int inner_iters);

// epochs * ceil(n/batch) SGD updates with the clipped rate min(base, 1/mu)
LStepResult l_step_sgd(const LossTask& task, const WeightVector& w0,
                       std::span<const double> target, double mu,
                       const LearnRateSchedule& sched, int epochs, int batch_size,
                       std::uint64_t seed);

// project the shifted masked vector w - lambda/mu
CompressedParams c_step(const CompressionScheme& scheme, const WeightVector& w,
                        std::span<const double> lambda, double mu);

// lambda <- lambda - mu (w_masked - decode(theta))
std::vector<double> multiplier_update(std::span<const double> lambda, const WeightVector& w,
                                      const CompressedParams& theta, double mu);

LCResult lc_run(const LossTask& task, const CompressionScheme& scheme, const LCConfig& config,
                const WeightVector& w_ref);

struct DCResult {
    CompressedParams theta;
    WeightVector model;
    double loss = 0.0;
};

// direct compression: project the reference weights once
DCResult dc_run(const LossTask& task, const CompressionScheme& scheme, const WeightVector& w_ref);

struct IdcOptions {
    int rounds = 10;
    bool exact_solve = false; // least-squares only: solve the retrain exactly
    int budget = 100;         // GD iterations or SGD epochs per retrain
    double alpha = 0.2;
    double beta = 20.0;
    int batch_size = 10;
    std::uint64_t seed = 0;
};

struct IdcRound {
    int round = 0;
    double loss_w = 0.0;
    double loss_compressed = 0.0;
    double theta_change = 0.0; // max-abs change of decode(theta) vs previous round
};

struct IdcResult {
    std::vector<IdcRound> history;
    std::vector<std::vector<double>> fingerprints; // decode(theta) per round, round 0 = DC
    CompressedParams theta;
    WeightVector model;
    bool cycling = false;
    int cycle_round = -1; // first round whose fingerprint repeats an earlier one
};

// iterated direct compression: alternate unpenalized retraining and projection
IdcResult idc_run(const LossTask& task, const CompressionScheme& scheme,
                  const WeightVector& w_ref, const IdcOptions& opts);

struct RetrainResult {
    WeightVector w;
    SparseParams params;
    double loss = 0.0;
};

// fix the direct-compression support of size kappa, then minimize over the
// surviving weights (exact restricted least squares for convex tasks)
RetrainResult retrain_after_prune(const LossTask& task, const WeightVector& w_ref, int kappa,
                                  int lstep_budget);

} // namespace lc
