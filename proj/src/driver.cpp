#include "lc/driver.hpp"

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "lc/errors.hpp"
#include "lc/rng.hpp"

namespace lc {

const char* method_name(Method m) { return m == Method::QP ? "qp" : "al"; }

Method method_from_name(const std::string& s) {
    if (s == "qp") return Method::QP;
    if (s == "al") return Method::AL;
    throw ConfigError("unknown method '" + s + "', expected qp or al");
}

namespace {

std::vector<double> constraint_residual(const WeightVector& w, const CompressedParams& theta) {
    std::vector<double> wm = w.masked_values();
    std::vector<double> delta = decode_masked(theta);
    if (delta.size() != wm.size())
        throw ConfigError("theta length does not match the masked coordinate count");
    for (std::size_t i = 0; i < wm.size(); ++i) wm[i] -= delta[i];
    return wm;
}

void check_mu(double mu) {
    if (!(mu > 0.0)) throw NumericError("mu must be positive");
}

} // namespace

double qp_value(const LossTask& task, const CompressionScheme& scheme, const WeightVector& w,
                const CompressedParams& theta, double mu) {
    check_mu(mu);
    (void)scheme;
    std::vector<double> r = constraint_residual(w, theta);
    double pen = 0;
    for (double x : r) pen += x * x;
    return loss_eval(task, w) + 0.5 * mu * pen;
}

double al_value(const LossTask& task, const CompressionScheme& scheme, const WeightVector& w,
                const CompressedParams& theta, std::span<const double> lambda, double mu) {
    check_mu(mu);
    (void)scheme;
    std::vector<double> r = constraint_residual(w, theta);
    if (lambda.size() != r.size()) throw ConfigError("lambda length does not match masked count");
    double pen = 0, lin = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        pen += r[i] * r[i];
        lin += lambda[i] * r[i];
    }
    return loss_eval(task, w) - lin + 0.5 * mu * pen;
}

LStepResult l_step_fixed(const LossTask& task, const WeightVector& w0,
                         std::span<const double> target, double mu, int inner_iters) {
    check_mu(mu);
    if (inner_iters < 1) throw ConfigError("l_step_fixed: inner_iters must be >= 1");
    auto midx = w0.masked_indices();
    if (target.size() != midx.size())
        throw ConfigError("l_step_fixed: target length does not match masked count");
    const double m = lipschitz_bound(task);
    const double step = 1.0 / (m + mu);

    LStepResult res;
    res.w = w0;
    auto objective = [&](const WeightVector& w) {
        double pen = 0;
        for (std::size_t j = 0; j < midx.size(); ++j) {
            double d = w.values[midx[j]] - target[j];
            pen += d * d;
        }
        return loss_eval(task, w) + 0.5 * mu * pen;
    };
    double q = objective(res.w);
    res.q_trace.push_back(q);
    for (int it = 0; it < inner_iters; ++it) {
        std::vector<double> g = loss_grad(task, res.w);
        for (std::size_t j = 0; j < midx.size(); ++j)
            g[midx[j]] += mu * (res.w.values[midx[j]] - target[j]);
        double gn = norm2(g);
        if (gn <= 1e-14) break;
        for (std::size_t i = 0; i < g.size(); ++i) res.w.values[i] -= step * g[i];
        double qn = objective(res.w);
        if (qn > q + 1e-12 * (1.0 + std::fabs(q)))
            throw NumericError("l_step_fixed: objective increased, Lipschitz bound looks wrong");
        q = qn;
        res.q_trace.push_back(q);
        res.iters = it + 1;
    }
    check_finite(res.w.values, "l_step_fixed");
    return res;
}

LStepResult l_step_sgd(const LossTask& task, const WeightVector& w0,
                       std::span<const double> target, double mu,
                       const LearnRateSchedule& sched, int epochs, int batch_size,
                       std::uint64_t seed) {
    check_mu(mu);
    if (epochs < 1) throw ConfigError("l_step_sgd: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("l_step_sgd: batch size must be >= 1");
    if (sched.alpha <= 0 || sched.beta <= 0)
        throw ConfigError("l_step_sgd: schedule needs positive alpha and beta");
    auto midx = w0.masked_indices();
    if (target.size() != midx.size())
        throw ConfigError("l_step_sgd: target length does not match masked count");

    LearnRateSchedule clipped = sched;
    clipped.clip_mu = mu;
    LStepResult res;
    res.w = w0;
    Rng rng(seed);
    std::vector<std::size_t> perm(task.n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    long t = 0;
    for (int e = 0; e < epochs; ++e) {
        rng.shuffle(perm);
        for (std::size_t start = 0; start < task.n; start += batch_size) {
            std::size_t len = std::min<std::size_t>(batch_size, task.n - start);
            std::span<const std::size_t> batch(perm.data() + start, len);
            std::vector<double> g = minibatch_grad(task, res.w, batch);
            for (std::size_t j = 0; j < midx.size(); ++j)
                g[midx[j]] += mu * (res.w.values[midx[j]] - target[j]);
            double eta = clipped.rate(t);
            for (std::size_t i = 0; i < g.size(); ++i) res.w.values[i] -= eta * g[i];
            ++t;
        }
    }
    res.iters = t;
    check_finite(res.w.values, "l_step_sgd");
    return res;
}

CompressedParams c_step(const CompressionScheme& scheme, const WeightVector& w,
                        std::span<const double> lambda, double mu) {
    check_mu(mu);
    auto midx = w.masked_indices();
    if (lambda.size() != midx.size())
        throw ConfigError("c_step: lambda length does not match masked count");
    WeightVector shifted = w;
    for (std::size_t j = 0; j < midx.size(); ++j)
        shifted.values[midx[j]] = w.values[midx[j]] - lambda[j] / mu;
    return project(scheme, shifted);
}

std::vector<double> multiplier_update(std::span<const double> lambda, const WeightVector& w,
                                      const CompressedParams& theta, double mu) {
    check_mu(mu);
    std::vector<double> r = constraint_residual(w, theta);
    if (lambda.size() != r.size())
        throw ConfigError("multiplier_update: lambda length does not match masked count");
    std::vector<double> out(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) out[i] = lambda[i] - mu * r[i];
    return out;
}

namespace {

struct ResolvedConfig {
    Method method;
    double mu0, a, tol;
    int max_outer, inner_iters, epochs, batch_size, steps_per_mu;
    LStepKind lstep;
    LearnRateSchedule sched;
    bool update_multipliers;
    std::uint64_t seed;
};

ResolvedConfig resolve_config(const LCConfig& cfg, const LossTask& task, double loss_ref,
                              double dc_residual_sq, std::size_t pm) {
    ResolvedConfig r{};
    r.method = cfg.method;
    if (!(cfg.a > 1.0)) throw ConfigError("lc.a must be > 1");
    if (cfg.max_outer < 1) throw ConfigError("lc.max-outer must be >= 1");
    if (cfg.inner_iters < 1) throw ConfigError("lc.inner-iters must be >= 1");
    if (cfg.epochs < 1) throw ConfigError("lc.epochs must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("lc.batch-size must be >= 1");
    if (cfg.steps_per_mu < 1) throw ConfigError("lc.steps-per-mu must be >= 1");
    r.a = cfg.a;
    r.max_outer = cfg.max_outer;
    r.inner_iters = cfg.inner_iters;
    r.epochs = cfg.epochs;
    r.batch_size = cfg.batch_size;
    r.steps_per_mu = cfg.steps_per_mu;
    r.update_multipliers = cfg.update_multipliers;
    r.seed = cfg.seed;
    r.sched = LearnRateSchedule{cfg.alpha, cfg.beta, 0.0};
    if (cfg.mu0) {
        if (!(*cfg.mu0 > 0.0)) throw ConfigError("lc.mu0 must be positive");
        r.mu0 = *cfg.mu0;
    } else {
        // scale-aware default, floored so that a perfectly fit reference
        // still yields a valid schedule
        r.mu0 = std::max(1e-3 * loss_ref / (1.0 + dc_residual_sq), 1e-8);
    }
    if (cfg.constraint_tol) {
        if (!(*cfg.constraint_tol > 0.0)) throw ConfigError("lc.tol must be positive");
        r.tol = *cfg.constraint_tol;
    } else {
        r.tol = 1e-6 * std::sqrt(static_cast<double>(pm));
    }
    if (cfg.lstep) {
        r.lstep = *cfg.lstep;
    } else {
        r.lstep = task.family == LossFamily::MlpXent ? LStepKind::Sgd : LStepKind::FixedStepGd;
    }
    if (r.lstep == LStepKind::FixedStepGd && task.family == LossFamily::MlpXent)
        throw ConfigError("fixed-step L step needs a convex family; use lstep = sgd");
    return r;
}

} // namespace

LCResult lc_run(const LossTask& task, const CompressionScheme& scheme, const LCConfig& config,
                const WeightVector& w_ref) {
    task.validate();
    validate_scheme(scheme, w_ref);
    const auto midx = w_ref.masked_indices();
    const std::size_t pm = midx.size();

    LCResult res;
    LCState& st = res.state;
    st.w = w_ref;
    st.theta = project(scheme, st.w); // direct compression starts the path
    st.lambda.assign(pm, 0.0);

    const double loss_ref = loss_eval(task, st.w);
    double dc_sq = 0;
    {
        std::vector<double> r0 = constraint_residual(st.w, st.theta);
        for (double x : r0) dc_sq += x * x;
    }
    ResolvedConfig cfg = resolve_config(config, task, loss_ref, dc_sq, pm);
    res.mu0_used = cfg.mu0;
    res.tol_used = cfg.tol;

    double mu = cfg.mu0;
    int unchanged = 0;
    std::vector<double> prev_delta;
    for (int k = 1; k <= cfg.max_outer; ++k) {
        auto tick = std::chrono::steady_clock::now();
        st.mu = mu;
        long iters = 0;
        for (int s = 0; s < cfg.steps_per_mu; ++s) {
            // Fig-2 style L step target: Delta(theta) + lambda/mu
            std::vector<double> target = decode_masked(st.theta);
            for (std::size_t j = 0; j < pm; ++j) target[j] += st.lambda[j] / mu;
            LStepResult ls;
            if (cfg.lstep == LStepKind::FixedStepGd) {
                ls = l_step_fixed(task, st.w, target, mu, cfg.inner_iters);
            } else {
                std::uint64_t seed = mix_seed(cfg.seed, 0x4C00 + 131 * k + s);
                ls = l_step_sgd(task, st.w, target, mu, cfg.sched, cfg.epochs, cfg.batch_size,
                                seed);
            }
            st.w = std::move(ls.w);
            iters += ls.iters;
            st.theta = c_step(scheme, st.w, st.lambda, mu);
        }
        std::vector<double> delta = decode_masked(st.theta);
        double cnorm = 0;
        for (std::size_t j = 0; j < pm; ++j) {
            double d = st.w.values[midx[j]] - delta[j];
            cnorm += d * d;
        }
        cnorm = std::sqrt(cnorm);
        if (cfg.method == Method::AL && cfg.update_multipliers)
            st.lambda = multiplier_update(st.lambda, st.w, st.theta, mu);

        MetricsRecord rec;
        rec.k = k;
        rec.mu = mu;
        rec.loss_w = loss_eval(task, st.w);
        rec.loss_compressed = loss_eval(task, decompress(scheme, st.theta, st.w));
        rec.constraint_norm = cnorm;
        rec.lambda_norm = norm2(st.lambda);
        rec.lstep_iters_used = iters;
        rec.wallclock_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - tick)
                               .count();
        st.history.push_back(rec);
        st.k = k;

        // a frozen Delta(theta) with an unmet constraint means the iterates
        // are stuck at the direct-compression point
        if (!prev_delta.empty() && max_abs_diff(delta, prev_delta) <= 1e-10 && cnorm > cfg.tol) {
            if (++unchanged >= 3) res.stuck_at_dc = true;
        } else {
            unchanged = 0;
        }
        prev_delta = std::move(delta);

        if (cnorm < cfg.tol) {
            res.converged = true;
            break;
        }
        mu *= cfg.a;
        if (!std::isfinite(mu)) throw NumericError("mu overflowed, lower a or max-outer");
    }
    res.compressed = decompress(scheme, st.theta, st.w);
    return res;
}

DCResult dc_run(const LossTask& task, const CompressionScheme& scheme, const WeightVector& w_ref) {
    validate_scheme(scheme, w_ref);
    DCResult res;
    res.theta = project(scheme, w_ref);
    res.model = decompress(scheme, res.theta, w_ref);
    res.loss = loss_eval(task, res.model);
    return res;
}

namespace {

// production-side exact solve: minimize the least-squares loss over the
// active coordinates, everything else pinned at zero
WeightVector exact_restricted_ls(const LossTask& task, const WeightVector& shape,
                                 const std::vector<std::size_t>& active) {
    if (task.family != LossFamily::LeastSquares)
        throw ConfigError("exact restricted solve needs a least-squares task");
    const std::size_t p = task.d + 1;
    const bool reg = task.l2_reg > 0;
    const std::size_t rows = task.n + (reg ? active.size() : 0);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, active.size());
    Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
    for (std::size_t i = 0; i < task.n; ++i) {
        for (std::size_t j = 0; j < active.size(); ++j) {
            std::size_t col = active[j];
            a(i, j) = col == p - 1 ? 1.0 : task.X[i * task.d + col];
        }
        b(i) = task.y[i];
    }
    if (reg) {
        double root = std::sqrt(task.l2_reg);
        for (std::size_t j = 0; j < active.size(); ++j) a(task.n + j, j) = root;
    }
    Eigen::VectorXd beta = a.colPivHouseholderQr().solve(b);
    WeightVector w = shape;
    std::fill(w.values.begin(), w.values.end(), 0.0);
    for (std::size_t j = 0; j < active.size(); ++j) w.values[active[j]] = beta(j);
    check_finite(w.values, "exact_restricted_ls");
    return w;
}

// gradient descent / SGD restricted to the active coordinates
WeightVector budget_restricted_minimize(const LossTask& task, const WeightVector& w0,
                                        const std::vector<std::uint8_t>& active, int budget,
                                        double alpha, double beta, int batch_size,
                                        std::uint64_t seed) {
    WeightVector w = w0;
    for (std::size_t i = 0; i < w.size(); ++i)
        if (!active[i]) w.values[i] = 0.0;
    if (task.family == LossFamily::MlpXent) {
        Rng rng(seed);
        std::vector<std::size_t> perm(task.n);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        long t = 0;
        for (int e = 0; e < budget; ++e) {
            rng.shuffle(perm);
            for (std::size_t start = 0; start < task.n; start += batch_size) {
                std::size_t len = std::min<std::size_t>(batch_size, task.n - start);
                std::vector<double> g =
                    minibatch_grad(task, w, std::span<const std::size_t>(perm.data() + start, len));
                double eta = alpha / (beta + static_cast<double>(t));
                for (std::size_t i = 0; i < w.size(); ++i)
                    if (active[i]) w.values[i] -= eta * g[i];
                ++t;
            }
        }
        return w;
    }
    const double step = 1.0 / lipschitz_bound(task);
    for (int it = 0; it < budget; ++it) {
        std::vector<double> g = loss_grad(task, w);
        double gn = 0;
        for (std::size_t i = 0; i < w.size(); ++i)
            if (active[i]) gn += g[i] * g[i];
        if (std::sqrt(gn) < 1e-10) break;
        for (std::size_t i = 0; i < w.size(); ++i)
            if (active[i]) w.values[i] -= step * g[i];
    }
    return w;
}

} // namespace

IdcResult idc_run(const LossTask& task, const CompressionScheme& scheme,
                  const WeightVector& w_ref, const IdcOptions& opts) {
    task.validate();
    validate_scheme(scheme, w_ref);
    if (opts.rounds < 1) throw ConfigError("idc_run: rounds must be >= 1");
    if (opts.exact_solve && task.family != LossFamily::LeastSquares)
        throw ConfigError("idc_run: exact solves are least-squares only");

    IdcResult res;
    res.theta = project(scheme, w_ref);
    res.fingerprints.push_back(decode_masked(res.theta));
    WeightVector w = w_ref;
    std::vector<std::size_t> all(w.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::uint8_t> all_active(w.size(), 1);

    for (int round = 1; round <= opts.rounds; ++round) {
        WeightVector init = decompress(scheme, res.theta, w);
        if (opts.exact_solve) {
            w = exact_restricted_ls(task, init, all);
        } else {
            w = budget_restricted_minimize(task, init, all_active, opts.budget, opts.alpha,
                                           opts.beta, opts.batch_size,
                                           mix_seed(opts.seed, 0x1DC0 + round));
        }
        res.theta = project(scheme, w);
        std::vector<double> fp = decode_masked(res.theta);
        IdcRound rec;
        rec.round = round;
        rec.loss_w = loss_eval(task, w);
        rec.loss_compressed = loss_eval(task, decompress(scheme, res.theta, w));
        rec.theta_change = max_abs_diff(fp, res.fingerprints.back());
        if (!res.cycling) {
            for (const auto& old : res.fingerprints) {
                if (max_abs_diff(fp, old) <= 1e-8) {
                    res.cycling = true;
                    res.cycle_round = round;
                    break;
                }
            }
        }
        res.fingerprints.push_back(std::move(fp));
        res.history.push_back(rec);
    }
    res.model = decompress(scheme, res.theta, w);
    return res;
}

RetrainResult retrain_after_prune(const LossTask& task, const WeightVector& w_ref, int kappa,
                                  int lstep_budget) {
    task.validate();
    CompressionScheme scheme;
    scheme.kind = SchemeKind::PruneL0;
    scheme.keep_count = kappa;
    validate_scheme(scheme, w_ref);
    auto theta = project(scheme, w_ref);
    const auto& sp = std::get<SparseParams>(theta);
    auto midx = w_ref.masked_indices();

    std::vector<std::uint8_t> active(w_ref.size(), 0);
    for (std::size_t i = 0; i < w_ref.mask.size(); ++i)
        if (!w_ref.mask[i]) active[i] = 1; // free coordinates stay trainable
    for (std::size_t s : sp.support) active[midx[s]] = 1;

    RetrainResult res;
    if (task.family == LossFamily::LeastSquares) {
        std::vector<std::size_t> act_idx;
        for (std::size_t i = 0; i < active.size(); ++i)
            if (active[i]) act_idx.push_back(i);
        res.w = exact_restricted_ls(task, w_ref, act_idx);
    } else {
        if (lstep_budget < 1) throw ConfigError("retrain_after_prune: budget must be >= 1");
        res.w = budget_restricted_minimize(task, decompress(scheme, theta, w_ref), active,
                                           lstep_budget, 0.2, 20.0, 10, 0x8E7);
    }
    res.params.masked_len = sp.masked_len;
    res.params.support = sp.support;
    res.params.vals.clear();
    for (std::size_t s : res.params.support) res.params.vals.push_back(res.w.values[midx[s]]);
    res.loss = loss_eval(task, res.w);
    return res;
}

} // namespace lc
