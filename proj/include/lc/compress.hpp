#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lc/weights.hpp"

namespace lc {

enum class SchemeKind { AdaptiveQuant, FixedCodebook, Binarize, Ternary, LowRank, PruneL0 };

const char* scheme_name(SchemeKind k);
SchemeKind scheme_from_name(const std::string& s);

struct CompressionScheme {
    SchemeKind kind = SchemeKind::Binarize;
    int codebook_size = 0;         // adaptive-quant: 1 <= K < masked count
    std::vector<double> codebook;  // fixed-codebook: strictly increasing values
    int rank = 0;                  // low-rank
    std::string layer = "W1";      // low-rank target block
    int keep_count = 0;            // prune-l0: 1 <= kappa <= masked count
    int restarts = 10;             // adaptive-quant k-means restarts
    std::uint64_t seed = 0;        // adaptive-quant seeding
};

struct QuantParams {
    std::vector<double> codebook;       // K values
    std::vector<std::uint32_t> assign;  // per masked weight, 0-based index into codebook
};

struct SignParams {
    std::vector<std::int8_t> signs; // +1 / -1 per masked weight
};

struct TernaryParams {
    std::vector<std::int8_t> levels; // -1 / 0 / +1 per masked weight
};

struct LowRankParams {
    std::size_t m = 0, n = 0, r = 0;
    std::vector<double> u; // m x r row-major
    std::vector<double> v; // n x r row-major
};

struct SparseParams {
    std::size_t masked_len = 0;       // length of the masked subvector
    std::vector<std::size_t> support; // sorted indices into the masked subvector
    std::vector<double> vals;
};

using CompressedParams = std::variant<QuantParams, SignParams, TernaryParams, LowRankParams, SparseParams>;

SchemeKind params_kind(const CompressedParams& theta);

// number of masked coordinates the parameters decode to
std::size_t params_length(const CompressedParams& theta);

// scheme invariants against a concrete weight vector; throws ConfigError
void validate_scheme(const CompressionScheme& scheme, const WeightVector& w);

// set w.mask for the scheme: the designated layer for low-rank, every matrix
// entry otherwise; compress_biases additionally masks bias blocks
void apply_scheme_mask(WeightVector& w, const CompressionScheme& scheme, bool compress_biases);

// masked entries decoded from theta, unmasked entries copied from tmpl
WeightVector decompress(const CompressionScheme& scheme, const CompressedParams& theta,
                        const WeightVector& tmpl);

// theta values written back onto the masked subvector, in order
std::vector<double> decode_masked(const CompressedParams& theta);

// orthogonal projection of the masked subvector onto the feasible set
CompressedParams project(const CompressionScheme& scheme, const WeightVector& w);

struct StorageCost {
    long theta_bits = 0;
    long overhead_bits = 0;
    long total_bits = 0;
};

StorageCost storage_cost(const CompressionScheme& scheme, const CompressedParams& theta,
                         int float_bits);

struct KMeansResult {
    std::vector<double> codebook;
    std::vector<std::uint32_t> assign;
    double distortion = 0.0;
    std::vector<double> trace; // distortion after each Lloyd iteration (best restart)
};

// 1-d k-means. Small inputs (<= 512 points) are solved exactly by a dynamic
// program over contiguous segments of the sorted data; larger ones fall back
// to k-means++ with Lloyd restarts, reduced deterministically with ties broken
// toward the earlier restart.
KMeansResult kmeans_1d(std::span<const double> data, int k, int restarts, std::uint64_t seed);

} // namespace lc
