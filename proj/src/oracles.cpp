#include "lc/oracles.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lc/errors.hpp"

namespace lc {

QuantOracleResult oracle_quant(std::span<const double> values, int k) {
    const std::size_t n = values.size();
    if (n == 0) throw ConfigError("oracle_quant: empty input");
    if (n > 12 || k > 3)
        throw ConfigError("oracle_quant: size limit exceeded (needs masked count <= 12, k <= 3)");
    if (k < 1 || static_cast<std::size_t>(k) > n)
        throw ConfigError("oracle_quant: need 1 <= k <= point count");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = values[order[i]];

    // prefix sums for O(1) segment cost
    std::vector<double> ps(n + 1, 0.0), ps2(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        ps[i + 1] = ps[i] + s[i];
        ps2[i + 1] = ps2[i] + s[i] * s[i];
    }
    auto seg_cost = [&](std::size_t lo, std::size_t hi) { // [lo, hi)
        double cnt = static_cast<double>(hi - lo);
        double sum = ps[hi] - ps[lo];
        return (ps2[hi] - ps2[lo]) - sum * sum / cnt;
    };
    auto seg_mean = [&](std::size_t lo, std::size_t hi) {
        return (ps[hi] - ps[lo]) / static_cast<double>(hi - lo);
    };

    // an optimal 1-d clustering is contiguous in sorted order, so enumerate
    // the k-1 split points
    std::vector<std::size_t> cuts(k - 1), best_cuts;
    double best = HUGE_VAL;
    auto eval_cuts = [&]() {
        double cost = 0;
        std::size_t lo = 0;
        for (std::size_t c : cuts) {
            cost += seg_cost(lo, c);
            lo = c;
        }
        cost += seg_cost(lo, n);
        if (cost < best) {
            best = cost;
            best_cuts = cuts;
        }
    };
    if (k == 1) {
        eval_cuts();
    } else {
        // lexicographic enumeration of 1 <= c1 < c2 < ... < c_{k-1} <= n-1
        for (std::size_t i = 0; i < cuts.size(); ++i) cuts[i] = i + 1;
        while (true) {
            eval_cuts();
            int j = k - 2;
            while (j >= 0 && cuts[j] == n - (cuts.size() - j)) --j;
            if (j < 0) break;
            ++cuts[j];
            for (std::size_t i = j + 1; i < cuts.size(); ++i) cuts[i] = cuts[i - 1] + 1;
        }
    }

    QuantOracleResult res;
    res.distortion = best;
    res.params.codebook.reserve(k);
    std::vector<std::uint32_t> seg_of(n);
    std::size_t lo = 0;
    for (int c = 0; c < k; ++c) {
        std::size_t hi = c + 1 < k ? best_cuts[c] : n;
        res.params.codebook.push_back(seg_mean(lo, hi));
        for (std::size_t i = lo; i < hi; ++i) seg_of[i] = static_cast<std::uint32_t>(c);
        lo = hi;
    }
    res.params.assign.resize(n);
    for (std::size_t i = 0; i < n; ++i) res.params.assign[order[i]] = seg_of[i];
    return res;
}

SignOracleResult oracle_sign_loss(const LossTask& task, const WeightVector& tmpl) {
    tmpl.validate();
    const std::size_t pm = tmpl.masked_count();
    if (pm == 0) throw ConfigError("oracle_sign_loss: nothing masked");
    if (pm > 16)
        throw ConfigError("oracle_sign_loss: size limit exceeded (needs masked count <= 16)");
    auto midx = tmpl.masked_indices();
    WeightVector w = tmpl;
    SignOracleResult res;
    res.loss = HUGE_VAL;
    for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << pm); ++bits) {
        for (std::size_t i = 0; i < pm; ++i)
            w.values[midx[i]] = (bits >> i) & 1 ? 1.0 : -1.0;
        double l = loss_eval(task, w);
        if (l < res.loss) {
            res.loss = l;
            res.params.signs.resize(pm);
            for (std::size_t i = 0; i < pm; ++i)
                res.params.signs[i] = (bits >> i) & 1 ? std::int8_t{1} : std::int8_t{-1};
        }
    }
    return res;
}

namespace {

// exact minimum of the least-squares loss over the given active coordinates,
// all others pinned to zero; minimum-norm solution if the system is singular
double solve_restricted_ls(const LossTask& task, const std::vector<std::size_t>& active,
                           WeightVector& w) {
    const std::size_t p = task.d + 1;
    const std::size_t na = active.size();
    const bool reg = task.l2_reg > 0;
    const std::size_t rows = task.n + (reg ? na : 0);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, na);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
    for (std::size_t i = 0; i < task.n; ++i) {
        for (std::size_t j = 0; j < na; ++j) {
            std::size_t col = active[j];
            a(i, j) = col == p - 1 ? 1.0 : task.X[i * task.d + col];
        }
        b(i) = task.y[i];
    }
    if (reg) {
        double root = std::sqrt(task.l2_reg);
        for (std::size_t j = 0; j < na; ++j) a(task.n + j, j) = root;
    }
    Eigen::VectorXd beta =
        a.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b);
    std::fill(w.values.begin(), w.values.end(), 0.0);
    for (std::size_t j = 0; j < na; ++j) w.values[active[j]] = beta(j);
    return loss_eval(task, w);
}

} // namespace

SupportOracleResult oracle_support_loss(const LossTask& task, const WeightVector& tmpl, int kappa) {
    tmpl.validate();
    if (task.family != LossFamily::LeastSquares)
        throw ConfigError("oracle_support_loss: only least-squares tasks are supported");
    const std::size_t pm = tmpl.masked_count();
    if (pm > 16)
        throw ConfigError("oracle_support_loss: size limit exceeded (needs masked count <= 16)");
    if (kappa < 1 || static_cast<std::size_t>(kappa) > pm)
        throw ConfigError("oracle_support_loss: need 1 <= kappa <= masked count");
    auto midx = tmpl.masked_indices();
    std::vector<std::size_t> free_idx;
    for (std::size_t i = 0; i < tmpl.mask.size(); ++i)
        if (!tmpl.mask[i]) free_idx.push_back(i);

    SupportOracleResult res;
    res.loss = HUGE_VAL;
    WeightVector w = tmpl;
    std::vector<std::size_t> comb(kappa);
    std::iota(comb.begin(), comb.end(), std::size_t{0});
    while (true) {
        std::vector<std::size_t> active;
        active.reserve(comb.size() + free_idx.size());
        for (std::size_t c : comb) active.push_back(midx[c]);
        for (std::size_t f : free_idx) active.push_back(f);
        double l = solve_restricted_ls(task, active, w);
        if (l < res.loss) {
            res.loss = l;
            res.model = w;
            res.params.masked_len = pm;
            res.params.support.assign(comb.begin(), comb.end());
            res.params.vals.clear();
            for (std::size_t c : comb) res.params.vals.push_back(w.values[midx[c]]);
        }
        // next combination
        int j = kappa - 1;
        while (j >= 0 && comb[j] == pm - (comb.size() - j)) --j;
        if (j < 0) break;
        ++comb[j];
        for (std::size_t i = j + 1; i < comb.size(); ++i) comb[i] = comb[i - 1] + 1;
    }
    return res;
}

namespace {

// cyclic Jacobi sweeps on a small symmetric matrix; kept separate from the
// production SVD on purpose
std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t n) {
    auto at = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };
    double scale = 0;
    for (std::size_t i = 0; i < n * n; ++i) scale = std::max(scale, std::fabs(a[i]));
    if (scale == 0) return std::vector<double>(n, 0.0);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
        if (std::sqrt(off) <= 1e-15 * scale * static_cast<double>(n)) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double apq = at(p, q);
                if (std::fabs(apq) <= 1e-300) continue;
                double phi = 0.5 * std::atan2(2.0 * apq, at(q, q) - at(p, p));
                double c = std::cos(phi), s = std::sin(phi);
                double app = at(p, p), aqq = at(q, q);
                at(p, p) = c * c * app - 2.0 * s * c * apq + s * s * aqq;
                at(q, q) = s * s * app + 2.0 * s * c * apq + c * c * aqq;
                at(p, q) = 0.0;
                at(q, p) = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (i == p || i == q) continue;
                    double aip = at(i, p), aiq = at(i, q);
                    at(i, p) = c * aip - s * aiq;
                    at(p, i) = at(i, p);
                    at(i, q) = s * aip + c * aiq;
                    at(q, i) = at(i, q);
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = at(i, i);
    return ev;
}

} // namespace

double oracle_lowrank(const std::vector<double>& w, std::size_t m, std::size_t n, int r) {
    if (m == 0 || n == 0 || w.size() != m * n) throw ConfigError("oracle_lowrank: bad matrix shape");
    if (m > 8 || n > 8)
        throw ConfigError("oracle_lowrank: size limit exceeded (needs m, n <= 8)");
    if (r < 1 || static_cast<std::size_t>(r) > std::min(m, n))
        throw ConfigError("oracle_lowrank: need 1 <= r <= min(m, n)");
    // gram = W^T W
    std::vector<double> gram(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < m; ++k) s += w[k * n + i] * w[k * n + j];
            gram[i * n + j] = s;
        }
    std::vector<double> ev = jacobi_eigenvalues(std::move(gram), n);
    std::sort(ev.begin(), ev.end(), std::greater<double>());
    double tail = 0;
    for (std::size_t i = static_cast<std::size_t>(r); i < ev.size(); ++i)
        tail += std::max(ev[i], 0.0); // clamp rounding noise
    return std::sqrt(tail);
}

} // namespace lc
