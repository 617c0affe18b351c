#include "lc/loss.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <string>

#include "lc/errors.hpp"
#include "lc/rng.hpp"

namespace lc {

const char* family_name(LossFamily f) {
    switch (f) {
        case LossFamily::LeastSquares: return "least-squares";
        case LossFamily::Logistic: return "logistic";
        case LossFamily::MlpXent: return "mlp-xent";
    }
    return "?";
}

LossFamily family_from_name(const std::string& s) {
    if (s == "least-squares") return LossFamily::LeastSquares;
    if (s == "logistic") return LossFamily::Logistic;
    if (s == "mlp-xent") return LossFamily::MlpXent;
    throw ConfigError("unknown loss family '" + s + "'");
}

void LossTask::validate() const {
    if (n == 0 || d == 0) throw ConfigError("task needs n >= 1 data points and d >= 1 features");
    if (X.size() != n * d) throw ConfigError("task X has wrong size");
    if (y.size() != n) throw ConfigError("task targets have wrong length");
    if (l2_reg < 0) throw ConfigError("l2-reg must be nonnegative");
    if (family == LossFamily::MlpXent) {
        if (hidden == 0) throw ConfigError("mlp-xent task needs hidden >= 1");
        if (classes < 2) throw ConfigError("mlp-xent task needs classes >= 2");
    }
    if (family == LossFamily::Logistic) {
        for (std::size_t i = 0; i < n; ++i)
            if (y[i] != 0.0 && y[i] != 1.0)
                throw ConfigError("logistic targets must be 0 or 1 (row " + std::to_string(i + 1) + ")");
    }
    if (family == LossFamily::MlpXent) {
        for (std::size_t i = 0; i < n; ++i) {
            double c = y[i];
            if (c != std::floor(c) || c < 0 || c >= static_cast<double>(classes))
                throw ConfigError("class index out of range at row " + std::to_string(i + 1));
        }
    }
}

std::vector<LayerBlock> expected_layout(const LossTask& task) {
    if (task.family == LossFamily::MlpXent) {
        return {
            {"W1", task.hidden, task.d, false},
            {"b1", task.hidden, 1, true},
            {"W2", task.classes, task.hidden, false},
            {"b2", task.classes, 1, true},
        };
    }
    return {{"weights", 1, task.d, false}, {"bias", 1, 1, true}};
}

WeightVector make_initial_weights(const LossTask& task, std::uint64_t seed) {
    WeightVector w;
    w.layout = expected_layout(task);
    Rng rng(mix_seed(seed, 0x11));
    for (const auto& b : w.layout) {
        double scale = b.bias ? 0.0 : 1.0 / std::sqrt(static_cast<double>(b.cols));
        for (std::size_t i = 0; i < b.size(); ++i)
            w.values.push_back(scale * rng.normal());
    }
    w.mask.assign(w.values.size(), 0);
    // default mask: matrix entries compressed, biases free
    std::size_t off = 0;
    for (const auto& b : w.layout) {
        if (!b.bias)
            for (std::size_t i = 0; i < b.size(); ++i) w.mask[off + i] = 1;
        off += b.size();
    }
    return w;
}

namespace {

void check_shape(const LossTask& task, const WeightVector& w) {
    w.validate();
    auto want = expected_layout(task);
    if (w.layout.size() != want.size())
        throw ConfigError("weight layout does not match task family");
    for (std::size_t i = 0; i < want.size(); ++i)
        if (w.layout[i].rows != want[i].rows || w.layout[i].cols != want[i].cols)
            throw ConfigError("weight block '" + w.layout[i].name + "' has the wrong shape for this task");
}

double stable_softplus(double z) {
    return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z)));
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

struct MlpOffsets {
    std::size_t w1, b1, w2, b2;
    std::size_t d, h, c;
};

MlpOffsets mlp_offsets(const LossTask& task) {
    MlpOffsets o{};
    o.d = task.d;
    o.h = task.hidden;
    o.c = task.classes;
    o.w1 = 0;
    o.b1 = o.w1 + o.h * o.d;
    o.w2 = o.b1 + o.h;
    o.b2 = o.w2 + o.c * o.h;
    return o;
}

// loss of data point i, without the shared l2 term
double point_loss(const LossTask& task, const std::vector<double>& v, std::size_t i) {
    const double* x = task.X.data() + i * task.d;
    switch (task.family) {
        case LossFamily::LeastSquares: {
            double z = v[task.d];
            for (std::size_t j = 0; j < task.d; ++j) z += v[j] * x[j];
            double r = z - task.y[i];
            return 0.5 * r * r;
        }
        case LossFamily::Logistic: {
            double z = v[task.d];
            for (std::size_t j = 0; j < task.d; ++j) z += v[j] * x[j];
            return stable_softplus(z) - task.y[i] * z;
        }
        case LossFamily::MlpXent: {
            auto o = mlp_offsets(task);
            std::vector<double> h(o.h), z(o.c);
            for (std::size_t r = 0; r < o.h; ++r) {
                double a = v[o.b1 + r];
                for (std::size_t j = 0; j < o.d; ++j) a += v[o.w1 + r * o.d + j] * x[j];
                h[r] = std::tanh(a);
            }
            double zmax = -HUGE_VAL;
            for (std::size_t r = 0; r < o.c; ++r) {
                double a = v[o.b2 + r];
                for (std::size_t j = 0; j < o.h; ++j) a += v[o.w2 + r * o.h + j] * h[j];
                z[r] = a;
                zmax = std::max(zmax, a);
            }
            double s = 0;
            for (std::size_t r = 0; r < o.c; ++r) s += std::exp(z[r] - zmax);
            std::size_t cls = static_cast<std::size_t>(task.y[i]);
            return zmax + std::log(s) - z[cls];
        }
    }
    return 0;
}

void point_grad(const LossTask& task, const std::vector<double>& v, std::size_t i,
                std::vector<double>& g) {
    const double* x = task.X.data() + i * task.d;
    switch (task.family) {
        case LossFamily::LeastSquares: {
            double z = v[task.d];
            for (std::size_t j = 0; j < task.d; ++j) z += v[j] * x[j];
            double r = z - task.y[i];
            for (std::size_t j = 0; j < task.d; ++j) g[j] += r * x[j];
            g[task.d] += r;
            return;
        }
        case LossFamily::Logistic: {
            double z = v[task.d];
            for (std::size_t j = 0; j < task.d; ++j) z += v[j] * x[j];
            double r = sigmoid(z) - task.y[i];
            for (std::size_t j = 0; j < task.d; ++j) g[j] += r * x[j];
            g[task.d] += r;
            return;
        }
        case LossFamily::MlpXent: {
            auto o = mlp_offsets(task);
            std::vector<double> h(o.h), z(o.c);
            for (std::size_t r = 0; r < o.h; ++r) {
                double a = v[o.b1 + r];
                for (std::size_t j = 0; j < o.d; ++j) a += v[o.w1 + r * o.d + j] * x[j];
                h[r] = std::tanh(a);
            }
            double zmax = -HUGE_VAL;
            for (std::size_t r = 0; r < o.c; ++r) {
                double a = v[o.b2 + r];
                for (std::size_t j = 0; j < o.h; ++j) a += v[o.w2 + r * o.h + j] * h[j];
                z[r] = a;
                zmax = std::max(zmax, a);
            }
            double s = 0;
            for (std::size_t r = 0; r < o.c; ++r) s += std::exp(z[r] - zmax);
            std::size_t cls = static_cast<std::size_t>(task.y[i]);
            // dz = softmax(z) - onehot(cls)
            std::vector<double> dz(o.c), dh(o.h, 0.0);
            for (std::size_t r = 0; r < o.c; ++r) dz[r] = std::exp(z[r] - zmax) / s;
            dz[cls] -= 1.0;
            for (std::size_t r = 0; r < o.c; ++r) {
                for (std::size_t j = 0; j < o.h; ++j) {
                    g[o.w2 + r * o.h + j] += dz[r] * h[j];
                    dh[j] += v[o.w2 + r * o.h + j] * dz[r];
                }
                g[o.b2 + r] += dz[r];
            }
            for (std::size_t r = 0; r < o.h; ++r) {
                double da = dh[r] * (1.0 - h[r] * h[r]);
                for (std::size_t j = 0; j < o.d; ++j) g[o.w1 + r * o.d + j] += da * x[j];
                g[o.b1 + r] += da;
            }
            return;
        }
    }
}

} // namespace

double loss_eval(const LossTask& task, const WeightVector& w) {
    task.validate();
    check_shape(task, w);
    double reg_per_point = 0.0;
    if (task.l2_reg > 0) {
        double sq = 0;
        for (double v : w.values) sq += v * v;
        reg_per_point = 0.5 * task.l2_reg * sq / static_cast<double>(task.n);
    }
    double total = 0;
    for (std::size_t i = 0; i < task.n; ++i) {
        double li = point_loss(task, w.values, i) + reg_per_point;
        if (!std::isfinite(li))
            throw NumericError("loss_eval: non-finite loss at data point " + std::to_string(i + 1));
        total += li;
    }
    return total;
}

std::vector<double> minibatch_grad(const LossTask& task, const WeightVector& w,
                                   std::span<const std::size_t> batch) {
    task.validate();
    check_shape(task, w);
    if (batch.empty()) throw ConfigError("minibatch_grad: empty batch");
    for (std::size_t i : batch)
        if (i >= task.n) throw ConfigError("minibatch_grad: batch index out of range");
    std::vector<double> g(w.size(), 0.0);
    for (std::size_t i : batch) point_grad(task, w.values, i, g);
    if (task.l2_reg > 0) {
        double c = task.l2_reg * static_cast<double>(batch.size()) / static_cast<double>(task.n);
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += c * w.values[j];
    }
    check_finite(g, "minibatch_grad");
    return g;
}

std::vector<double> loss_grad(const LossTask& task, const WeightVector& w) {
    std::vector<std::size_t> all(task.n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return minibatch_grad(task, w, all);
}

double lipschitz_bound(const LossTask& task) {
    task.validate();
    if (task.family == LossFamily::MlpXent)
        throw ConfigError("lipschitz_bound: unsupported family mlp-xent, use the SGD path");
    // Gram matrix of the design with the bias column appended
    const std::size_t p = task.d + 1;
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t i = 0; i < task.n; ++i) {
        Eigen::VectorXd xt(p);
        for (std::size_t j = 0; j < task.d; ++j) xt(j) = task.X[i * task.d + j];
        xt(p - 1) = 1.0;
        gram.noalias() += xt * xt.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    if (es.info() != Eigen::Success) throw NumericError("lipschitz_bound: eigensolver failed");
    double lmax = es.eigenvalues().maxCoeff();
    double m = task.family == LossFamily::Logistic ? 0.25 * lmax : lmax;
    return m + task.l2_reg;
}

GradientReport grad_check(const LossTask& task, const WeightVector& w) {
    std::vector<double> g = loss_grad(task, w);
    GradientReport rep;
    WeightVector probe = w;
    for (std::size_t i = 0; i < w.size(); ++i) {
        double h = 1e-6 * (1.0 + std::fabs(w.values[i]));
        double orig = probe.values[i];
        probe.values[i] = orig + h;
        double fp = loss_eval(task, probe);
        probe.values[i] = orig - h;
        double fm = loss_eval(task, probe);
        probe.values[i] = orig;
        double fd = 0.5 * (fp - fm) / h;
        // denominator clamp at 1e-3 makes the test "rel err < 1e-5" degrade to
        // "abs err < 1e-8" once both gradients are near zero
        double denom = std::max({std::fabs(g[i]), std::fabs(fd), 1e-3});
        double err = std::fabs(g[i] - fd) / denom;
        if (err > rep.max_rel_err) {
            rep.max_rel_err = err;
            rep.worst_index = i;
            rep.step_used = h;
        }
    }
    return rep;
}

namespace {

TrainResult train_gd(const LossTask& task, const TrainOptions& opts) {
    WeightVector w = make_initial_weights(task, opts.seed);
    const double step = 1.0 / lipschitz_bound(task);
    TrainResult res;
    long it = 0;
    for (; it < opts.max_iters; ++it) {
        std::vector<double> g = loss_grad(task, w);
        double gn = norm2(g);
        if (opts.log_every > 0 && it % opts.log_every == 0 && opts.log)
            opts.log(it, loss_eval(task, w), gn);
        if (gn < opts.grad_tol) {
            res.converged = true;
            break;
        }
        for (std::size_t j = 0; j < w.size(); ++j) w.values[j] -= step * g[j];
    }
    res.w = std::move(w);
    res.iters = it;
    res.loss = loss_eval(task, res.w);
    res.grad_norm = norm2(loss_grad(task, res.w));
    return res;
}

TrainResult train_sgd(const LossTask& task, const TrainOptions& opts) {
    if (opts.batch_size < 1) throw ConfigError("batch size must be >= 1");
    WeightVector w = make_initial_weights(task, opts.seed);
    Rng rng(mix_seed(opts.seed, 0x5d));
    std::vector<std::size_t> perm(task.n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    TrainResult res;
    long t = 0;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        rng.shuffle(perm);
        for (std::size_t start = 0; start < task.n; start += opts.batch_size) {
            std::size_t len = std::min<std::size_t>(opts.batch_size, task.n - start);
            std::span<const std::size_t> batch(perm.data() + start, len);
            std::vector<double> g = minibatch_grad(task, w, batch);
            double eta = opts.alpha / (opts.beta + static_cast<double>(t));
            for (std::size_t j = 0; j < w.size(); ++j) w.values[j] -= eta * g[j];
            ++t;
        }
        double gn = norm2(loss_grad(task, w));
        if (opts.log_every > 0 && epoch % opts.log_every == 0 && opts.log)
            opts.log(t, loss_eval(task, w), gn);
        if (gn < opts.grad_tol) {
            res.converged = true;
            break;
        }
    }
    res.w = std::move(w);
    res.iters = t;
    res.loss = loss_eval(task, res.w);
    res.grad_norm = norm2(loss_grad(task, res.w));
    return res;
}

} // namespace

TrainResult train_reference(const LossTask& task, const TrainOptions& opts) {
    task.validate();
    TrainResult res = task.family == LossFamily::MlpXent ? train_sgd(task, opts) : train_gd(task, opts);
    check_finite(res.w.values, "train_reference");
    return res;
}

} // namespace lc
