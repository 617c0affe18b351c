#pragma once

#include <vector>

#include "lc/compress.hpp"
#include "lc/loss.hpp"

namespace lc {

// Exhaustive reference solvers for small instances. They stay independent of
// the production projection/solver code paths so the two can check each other.
// Size limits are hard preconditions; exceeding them is a ConfigError.

struct QuantOracleResult {
    QuantParams params;
    double distortion = 0.0;
};

// exact 1-d k-means by enumerating contiguous partitions of the sorted data
// (masked count <= 12, k <= 3)
QuantOracleResult oracle_quant(std::span<const double> values, int k);

struct SignOracleResult {
    SignParams params;
    double loss = 0.0;
};

// minimal loss over all 2^Pm sign assignments, unmasked entries from tmpl
// (masked count <= 16)
SignOracleResult oracle_sign_loss(const LossTask& task, const WeightVector& tmpl);

struct SupportOracleResult {
    SparseParams params;
    double loss = 0.0;
    WeightVector model; // includes the re-solved free coordinates
};

// minimal loss over all (Pm choose kappa) supports, each solved exactly by
// restricted least squares; least-squares tasks only (masked count <= 16)
SupportOracleResult oracle_support_loss(const LossTask& task, const WeightVector& tmpl, int kappa);

// Frobenius-optimal rank-r error of a row-major m x n matrix, computed from
// the trailing eigenvalues of W^T W with a local Jacobi eigensolver
// (m, n <= 8, 1 <= r <= min(m, n); r = min(m, n) gives 0)
double oracle_lowrank(const std::vector<double>& w, std::size_t m, std::size_t n, int r);

} // namespace lc
