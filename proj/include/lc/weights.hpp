#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lc {

// One named block of the flat parameter vector: an m x n matrix stored
// row-major, or a length-b bias vector (cols == 1, bias == true).
struct LayerBlock {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool bias = false;

    std::size_t size() const { return rows * cols; }
};

// Flat parameter vector with a layout and a per-coordinate compression mask.
// Masked coordinates participate in the compression constraint; unmasked ones
// (typically biases) stay free during training.
struct WeightVector {
    std::vector<double> values;
    std::vector<LayerBlock> layout;
    std::vector<std::uint8_t> mask; // same length as values, 0 or 1

    std::size_t size() const { return values.size(); }
    std::size_t masked_count() const;
    std::vector<std::size_t> masked_indices() const;
    std::vector<double> masked_values() const;
    void set_masked_values(std::span<const double> vals);

    // offset of a named block into `values`; throws ConfigError if absent
    std::size_t block_offset(const std::string& name) const;
    const LayerBlock& block(const std::string& name) const;
    bool has_block(const std::string& name) const;

    // layout sizes sum to values.size(), mask length matches; throws ConfigError
    void validate() const;
};

bool same_layout(const WeightVector& a, const WeightVector& b);

// throws NumericError naming `what` and the offending index
void check_finite(std::span<const double> v, const char* what);

double norm2(std::span<const double> v);
double max_abs_diff(std::span<const double> a, std::span<const double> b);

} // namespace lc
