#include "lc/weights.hpp"

#include <cmath>
#include <string>

#include "lc/errors.hpp"

namespace lc {

std::size_t WeightVector::masked_count() const {
    std::size_t c = 0;
    for (auto m : mask) c += (m != 0);
    return c;
}

std::vector<std::size_t> WeightVector::masked_indices() const {
    std::vector<std::size_t> idx;
    idx.reserve(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) idx.push_back(i);
    return idx;
}

std::vector<double> WeightVector::masked_values() const {
    std::vector<double> out;
    out.reserve(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) out.push_back(values[i]);
    return out;
}

void WeightVector::set_masked_values(std::span<const double> vals) {
    std::size_t j = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        if (j >= vals.size()) throw ConfigError("set_masked_values: too few values");
        values[i] = vals[j++];
    }
    if (j != vals.size()) throw ConfigError("set_masked_values: too many values");
}

std::size_t WeightVector::block_offset(const std::string& name) const {
    std::size_t off = 0;
    for (const auto& b : layout) {
        if (b.name == name) return off;
        off += b.size();
    }
    throw ConfigError("no layer block named '" + name + "'");
}

const LayerBlock& WeightVector::block(const std::string& name) const {
    for (const auto& b : layout)
        if (b.name == name) return b;
    throw ConfigError("no layer block named '" + name + "'");
}

bool WeightVector::has_block(const std::string& name) const {
    for (const auto& b : layout)
        if (b.name == name) return true;
    return false;
}

void WeightVector::validate() const {
    std::size_t total = 0;
    for (const auto& b : layout) {
        if (b.rows == 0 || b.cols == 0)
            throw ConfigError("layer block '" + b.name + "' has a zero dimension");
        if (b.bias && b.cols != 1)
            throw ConfigError("bias block '" + b.name + "' must have cols == 1");
        total += b.size();
    }
    if (total != values.size())
        throw ConfigError("layout sizes sum to " + std::to_string(total) + " but vector has " +
                          std::to_string(values.size()) + " values");
    if (mask.size() != values.size())
        throw ConfigError("mask length does not match value count");
}

bool same_layout(const WeightVector& a, const WeightVector& b) {
    if (a.layout.size() != b.layout.size()) return false;
    for (std::size_t i = 0; i < a.layout.size(); ++i) {
        const auto &x = a.layout[i], &y = b.layout[i];
        if (x.name != y.name || x.rows != y.rows || x.cols != y.cols || x.bias != y.bias)
            return false;
    }
    return true;
}

void check_finite(std::span<const double> v, const char* what) {
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!std::isfinite(v[i]))
            throw NumericError(std::string(what) + ": non-finite value at index " + std::to_string(i));
}

double norm2(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0;
    std::size_t n = a.size() < b.size() ? a.size() : b.size();
    for (std::size_t i = 0; i < n; ++i) {
        double d = std::fabs(a[i] - b[i]);
        if (d > m) m = d;
    }
    if (a.size() != b.size()) return HUGE_VAL;
    return m;
}

} // namespace lc
