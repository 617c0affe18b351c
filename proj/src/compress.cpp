#include "lc/compress.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "lc/errors.hpp"
#include "lc/rng.hpp"

namespace lc {

const char* scheme_name(SchemeKind k) {
    switch (k) {
        case SchemeKind::AdaptiveQuant: return "adaptive-quant";
        case SchemeKind::FixedCodebook: return "fixed-codebook";
        case SchemeKind::Binarize: return "binarize";
        case SchemeKind::Ternary: return "ternary";
        case SchemeKind::LowRank: return "low-rank";
        case SchemeKind::PruneL0: return "prune-l0";
    }
    return "?";
}

SchemeKind scheme_from_name(const std::string& s) {
    if (s == "adaptive-quant") return SchemeKind::AdaptiveQuant;
    if (s == "fixed-codebook") return SchemeKind::FixedCodebook;
    if (s == "binarize") return SchemeKind::Binarize;
    if (s == "ternary") return SchemeKind::Ternary;
    if (s == "low-rank") return SchemeKind::LowRank;
    if (s == "prune-l0") return SchemeKind::PruneL0;
    throw ConfigError("unknown scheme '" + s + "'");
}

SchemeKind params_kind(const CompressedParams& theta) {
    switch (theta.index()) {
        case 0: return SchemeKind::AdaptiveQuant; // shared with fixed-codebook
        case 1: return SchemeKind::Binarize;
        case 2: return SchemeKind::Ternary;
        case 3: return SchemeKind::LowRank;
        default: return SchemeKind::PruneL0;
    }
}

std::size_t params_length(const CompressedParams& theta) {
    if (auto* q = std::get_if<QuantParams>(&theta)) return q->assign.size();
    if (auto* s = std::get_if<SignParams>(&theta)) return s->signs.size();
    if (auto* t = std::get_if<TernaryParams>(&theta)) return t->levels.size();
    if (auto* l = std::get_if<LowRankParams>(&theta)) return l->m * l->n;
    return std::get<SparseParams>(theta).masked_len;
}

namespace {

bool kind_matches(SchemeKind scheme, const CompressedParams& theta) {
    switch (scheme) {
        case SchemeKind::AdaptiveQuant:
        case SchemeKind::FixedCodebook: return std::holds_alternative<QuantParams>(theta);
        case SchemeKind::Binarize: return std::holds_alternative<SignParams>(theta);
        case SchemeKind::Ternary: return std::holds_alternative<TernaryParams>(theta);
        case SchemeKind::LowRank: return std::holds_alternative<LowRankParams>(theta);
        case SchemeKind::PruneL0: return std::holds_alternative<SparseParams>(theta);
    }
    return false;
}

// masked coordinates of a low-rank scheme must be exactly the target block
void check_lowrank_mask(const CompressionScheme& scheme, const WeightVector& w) {
    const LayerBlock& blk = w.block(scheme.layer);
    if (blk.bias) throw ConfigError("low-rank target '" + scheme.layer + "' is a bias block");
    std::size_t off = w.block_offset(scheme.layer);
    for (std::size_t i = 0; i < w.mask.size(); ++i) {
        bool inside = i >= off && i < off + blk.size();
        if (static_cast<bool>(w.mask[i]) != inside)
            throw ConfigError("low-rank scheme requires the mask to cover exactly layer '" +
                              scheme.layer + "'");
    }
}

} // namespace

void validate_scheme(const CompressionScheme& scheme, const WeightVector& w) {
    w.validate();
    const std::size_t pm = w.masked_count();
    if (pm == 0) throw ConfigError("scheme has no masked coordinates to compress");
    switch (scheme.kind) {
        case SchemeKind::AdaptiveQuant:
            if (scheme.codebook_size < 1 || static_cast<std::size_t>(scheme.codebook_size) >= pm)
                throw ConfigError("adaptive-quant needs 1 <= K < masked count");
            if (scheme.restarts < 1) throw ConfigError("adaptive-quant needs restarts >= 1");
            break;
        case SchemeKind::FixedCodebook: {
            if (scheme.codebook.empty()) throw ConfigError("fixed-codebook needs a nonempty codebook");
            for (std::size_t i = 1; i < scheme.codebook.size(); ++i)
                if (!(scheme.codebook[i - 1] < scheme.codebook[i]))
                    throw ConfigError("fixed codebook values must be strictly increasing");
            break;
        }
        case SchemeKind::Binarize:
        case SchemeKind::Ternary: break;
        case SchemeKind::LowRank: {
            check_lowrank_mask(scheme, w);
            const LayerBlock& blk = w.block(scheme.layer);
            std::size_t rmax = std::min(blk.rows, blk.cols);
            if (scheme.rank < 1 || static_cast<std::size_t>(scheme.rank) >= rmax)
                throw ConfigError("low-rank needs 1 <= r < min(rows, cols) of layer '" +
                                  scheme.layer + "'");
            break;
        }
        case SchemeKind::PruneL0:
            if (scheme.keep_count < 1 || static_cast<std::size_t>(scheme.keep_count) >= pm)
                throw ConfigError("prune-l0 needs 1 <= kappa < masked count");
            break;
    }
}

void apply_scheme_mask(WeightVector& w, const CompressionScheme& scheme, bool compress_biases) {
    w.validate();
    w.mask.assign(w.values.size(), 0);
    if (scheme.kind == SchemeKind::LowRank) {
        const LayerBlock& blk = w.block(scheme.layer);
        std::size_t off = w.block_offset(scheme.layer);
        for (std::size_t i = 0; i < blk.size(); ++i) w.mask[off + i] = 1;
        return;
    }
    std::size_t off = 0;
    for (const auto& b : w.layout) {
        if (!b.bias || compress_biases)
            for (std::size_t i = 0; i < b.size(); ++i) w.mask[off + i] = 1;
        off += b.size();
    }
}

std::vector<double> decode_masked(const CompressedParams& theta) {
    if (auto* q = std::get_if<QuantParams>(&theta)) {
        std::vector<double> out(q->assign.size());
        for (std::size_t i = 0; i < q->assign.size(); ++i) {
            if (q->assign[i] >= q->codebook.size())
                throw ConfigError("quant assignment out of codebook range");
            out[i] = q->codebook[q->assign[i]];
        }
        return out;
    }
    if (auto* s = std::get_if<SignParams>(&theta)) {
        std::vector<double> out(s->signs.size());
        for (std::size_t i = 0; i < s->signs.size(); ++i) {
            if (s->signs[i] != 1 && s->signs[i] != -1)
                throw ConfigError("sign parameters must be +1 or -1");
            out[i] = static_cast<double>(s->signs[i]);
        }
        return out;
    }
    if (auto* t = std::get_if<TernaryParams>(&theta)) {
        std::vector<double> out(t->levels.size());
        for (std::size_t i = 0; i < t->levels.size(); ++i) {
            if (t->levels[i] < -1 || t->levels[i] > 1)
                throw ConfigError("ternary levels must be -1, 0 or +1");
            out[i] = static_cast<double>(t->levels[i]);
        }
        return out;
    }
    if (auto* l = std::get_if<LowRankParams>(&theta)) {
        if (l->u.size() != l->m * l->r || l->v.size() != l->n * l->r)
            throw ConfigError("low-rank factors have inconsistent sizes");
        std::vector<double> out(l->m * l->n, 0.0);
        for (std::size_t i = 0; i < l->m; ++i)
            for (std::size_t j = 0; j < l->n; ++j) {
                double s = 0;
                for (std::size_t k = 0; k < l->r; ++k) s += l->u[i * l->r + k] * l->v[j * l->r + k];
                out[i * l->n + j] = s;
            }
        return out;
    }
    const auto& sp = std::get<SparseParams>(theta);
    if (sp.support.size() != sp.vals.size())
        throw ConfigError("sparse support and value lengths differ");
    std::vector<double> out(sp.masked_len, 0.0);
    for (std::size_t i = 0; i < sp.support.size(); ++i) {
        std::size_t s = sp.support[i];
        if (s >= sp.masked_len) throw ConfigError("sparse support index out of range");
        if (i > 0 && s <= sp.support[i - 1])
            throw ConfigError("sparse support must be strictly increasing");
        out[s] = sp.vals[i];
    }
    return out;
}

WeightVector decompress(const CompressionScheme& scheme, const CompressedParams& theta,
                        const WeightVector& tmpl) {
    tmpl.validate();
    if (!kind_matches(scheme.kind, theta))
        throw ConfigError("compressed parameters do not match scheme '" +
                          std::string(scheme_name(scheme.kind)) + "'");
    std::vector<double> dec = decode_masked(theta);
    if (dec.size() != tmpl.masked_count())
        throw ConfigError("compressed parameters decode to " + std::to_string(dec.size()) +
                          " values but the mask has " + std::to_string(tmpl.masked_count()));
    WeightVector out = tmpl;
    out.set_masked_values(dec);
    check_finite(out.values, "decompress");
    return out;
}

// ---- 1-d k-means ----

namespace {

std::vector<double> kmeanspp_seed(std::span<const double> data, int k, Rng& rng) {
    std::vector<double> centers;
    centers.reserve(k);
    centers.push_back(data[rng.index(data.size())]);
    std::vector<double> d2(data.size());
    while (static_cast<int>(centers.size()) < k) {
        double total = 0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            double best = HUGE_VAL;
            for (double c : centers) best = std::min(best, (data[i] - c) * (data[i] - c));
            d2[i] = best;
            total += best;
        }
        if (total <= 0) {
            // every point coincides with a center; duplicate in index order
            centers.push_back(data[centers.size() % data.size()]);
            continue;
        }
        double u = rng.uniform() * total, acc = 0;
        std::size_t pick = data.size() - 1;
        for (std::size_t i = 0; i < data.size(); ++i) {
            acc += d2[i];
            if (u < acc) {
                pick = i;
                break;
            }
        }
        centers.push_back(data[pick]);
    }
    return centers;
}

double distortion_of(std::span<const double> data, const std::vector<double>& centers,
                     const std::vector<std::uint32_t>& assign) {
    double dist = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        double d = data[i] - centers[assign[i]];
        dist += d * d;
    }
    return dist;
}

KMeansResult lloyd(std::span<const double> data, std::vector<double> centers) {
    const int k = static_cast<int>(centers.size());
    std::vector<std::uint32_t> assign(data.size(), 0), prev;
    std::vector<double> trace;
    for (int iter = 0; iter < 200; ++iter) {
        // assignment, ties to the lowest center index
        for (std::size_t i = 0; i < data.size(); ++i) {
            double best = HUGE_VAL;
            std::uint32_t bi = 0;
            for (int c = 0; c < k; ++c) {
                double d = (data[i] - centers[c]) * (data[i] - centers[c]);
                if (d < best) {
                    best = d;
                    bi = static_cast<std::uint32_t>(c);
                }
            }
            assign[i] = bi;
        }
        // empty-cluster repair: reseed on the point farthest from its center
        std::vector<std::size_t> count(k, 0);
        for (auto a : assign) count[a]++;
        for (int c = 0; c < k; ++c) {
            if (count[c] != 0) continue;
            double worst = -1.0;
            std::size_t pick = data.size();
            for (std::size_t i = 0; i < data.size(); ++i) {
                if (count[assign[i]] <= 1) continue;
                double d = (data[i] - centers[assign[i]]) * (data[i] - centers[assign[i]]);
                if (d > worst) {
                    worst = d;
                    pick = i;
                }
            }
            if (pick == data.size()) continue; // nothing movable
            count[assign[pick]]--;
            assign[pick] = static_cast<std::uint32_t>(c);
            count[c] = 1;
            centers[c] = data[pick];
        }
        // means
        std::vector<double> sum(k, 0.0);
        std::fill(count.begin(), count.end(), 0);
        for (std::size_t i = 0; i < data.size(); ++i) {
            sum[assign[i]] += data[i];
            count[assign[i]]++;
        }
        for (int c = 0; c < k; ++c)
            if (count[c] > 0) centers[c] = sum[c] / static_cast<double>(count[c]);
        trace.push_back(distortion_of(data, centers, assign));
        if (iter > 0 && assign == prev) break;
        prev = assign;
    }
    KMeansResult out;
    out.distortion = trace.back();
    out.codebook = std::move(centers);
    out.assign = std::move(assign);
    out.trace = std::move(trace);
    return out;
}

void canonicalize(KMeansResult& r) {
    const std::size_t k = r.codebook.size();
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return r.codebook[a] < r.codebook[b]; });
    std::vector<std::uint32_t> pos(k);
    std::vector<double> sorted(k);
    for (std::size_t i = 0; i < k; ++i) {
        pos[order[i]] = static_cast<std::uint32_t>(i);
        sorted[i] = r.codebook[order[i]];
    }
    r.codebook = std::move(sorted);
    for (auto& a : r.assign) a = pos[a];
}

// Optimal clusters of 1-d data are contiguous once sorted, so the exact
// solution is a dynamic program over segment ends. O(k n^2) with prefix sums;
// used below a size cutoff where that cost is negligible.
KMeansResult kmeans_1d_exact(std::span<const double> data, int k) {
    const std::size_t n = data.size();
    const std::size_t kk = static_cast<std::size_t>(k);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return data[a] < data[b]; });
    std::vector<double> ps(n + 1, 0.0), ps2(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double v = data[order[i]];
        ps[i + 1] = ps[i] + v;
        ps2[i + 1] = ps2[i] + v * v;
    }
    auto seg_cost = [&](std::size_t i, std::size_t j) { // sorted positions [i, j]
        double cnt = static_cast<double>(j - i + 1);
        double sum = ps[j + 1] - ps[i];
        double cost = (ps2[j + 1] - ps2[i]) - sum * sum / cnt;
        return cost > 0.0 ? cost : 0.0;
    };

    const double inf = HUGE_VAL;
    std::vector<double> prev(n, inf), cur(n, inf);
    std::vector<std::vector<std::uint32_t>> cut(kk, std::vector<std::uint32_t>(n, 0));
    for (std::size_t j = 0; j < n; ++j) prev[j] = seg_cost(0, j);
    for (std::size_t c = 1; c < kk; ++c) {
        for (std::size_t j = 0; j < n; ++j) {
            cur[j] = inf;
            if (j < c) continue; // too few points for c+1 non-empty segments
            for (std::size_t i = c; i <= j; ++i) {
                double cand = prev[i - 1] + seg_cost(i, j);
                if (cand < cur[j]) {
                    cur[j] = cand;
                    cut[c][j] = static_cast<std::uint32_t>(i);
                }
            }
        }
        std::swap(prev, cur);
    }

    std::vector<std::size_t> seg_of(n);
    std::size_t hi = n - 1;
    for (std::size_t c = kk; c-- > 1;) {
        std::size_t lo = cut[c][hi];
        for (std::size_t p = lo; p <= hi; ++p) seg_of[p] = c;
        hi = lo - 1;
    }
    for (std::size_t p = 0; p <= hi; ++p) seg_of[p] = 0;

    KMeansResult out;
    out.codebook.assign(kk, 0.0);
    std::vector<double> count(kk, 0.0);
    out.assign.resize(n);
    for (std::size_t p = 0; p < n; ++p) {
        out.codebook[seg_of[p]] += data[order[p]];
        count[seg_of[p]] += 1.0;
        out.assign[order[p]] = static_cast<std::uint32_t>(seg_of[p]);
    }
    for (std::size_t c = 0; c < kk; ++c) out.codebook[c] /= count[c];
    out.distortion = distortion_of(data, out.codebook, out.assign);
    out.trace = {out.distortion};
    return out;
}

constexpr std::size_t kExactKMeansCutoff = 512;

} // namespace

KMeansResult kmeans_1d(std::span<const double> data, int k, int restarts, std::uint64_t seed) {
    if (data.empty()) throw ConfigError("kmeans_1d: empty data");
    if (k < 1 || static_cast<std::size_t>(k) > data.size())
        throw ConfigError("kmeans_1d: need 1 <= k <= point count");
    if (restarts < 1) throw ConfigError("kmeans_1d: need restarts >= 1");
    if (data.size() <= kExactKMeansCutoff) {
        KMeansResult exact = kmeans_1d_exact(data, k);
        canonicalize(exact);
        return exact;
    }
    KMeansResult best;
    bool have = false;
    for (int r = 0; r < restarts; ++r) {
        Rng rng(mix_seed(seed, 0xA0 + static_cast<std::uint64_t>(r)));
        KMeansResult cur = lloyd(data, kmeanspp_seed(data, k, rng));
        if (!have || cur.distortion < best.distortion) {
            best = std::move(cur);
            have = true;
        }
    }
    canonicalize(best);
    return best;
}

// ---- projection ----

namespace {

QuantParams project_fixed_codebook(const std::vector<double>& cb, const std::vector<double>& mv) {
    QuantParams q;
    q.codebook = cb;
    q.assign.resize(mv.size());
    for (std::size_t i = 0; i < mv.size(); ++i) {
        // nearest value; exact ties go to the lower index
        auto it = std::lower_bound(cb.begin(), cb.end(), mv[i]);
        std::size_t hi = static_cast<std::size_t>(it - cb.begin());
        std::size_t pick;
        if (hi == 0) {
            pick = 0;
        } else if (hi == cb.size()) {
            pick = cb.size() - 1;
        } else {
            double dlo = mv[i] - cb[hi - 1], dhi = cb[hi] - mv[i];
            pick = dlo <= dhi ? hi - 1 : hi;
        }
        q.assign[i] = static_cast<std::uint32_t>(pick);
    }
    return q;
}

LowRankParams project_lowrank(const CompressionScheme& scheme, const WeightVector& w,
                              const std::vector<double>& mv) {
    const LayerBlock& blk = w.block(scheme.layer);
    const std::size_t m = blk.rows, n = blk.cols,
                      r = static_cast<std::size_t>(scheme.rank);
    Eigen::MatrixXd mat(m, n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) mat(i, j) = mv[i * n + j];
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(mat, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    double smax = sv.size() > 0 ? sv(0) : 0.0;
    LowRankParams p;
    p.m = m;
    p.n = n;
    p.r = r;
    p.u.assign(m * r, 0.0);
    p.v.assign(n * r, 0.0);
    for (std::size_t k = 0; k < r; ++k) {
        double s = sv(static_cast<Eigen::Index>(k));
        if (s < 1e-12 * smax) s = 0.0; // treat as numerically zero
        double root = std::sqrt(s);
        for (std::size_t i = 0; i < m; ++i) p.u[i * r + k] = root * svd.matrixU()(i, k);
        for (std::size_t j = 0; j < n; ++j) p.v[j * r + k] = root * svd.matrixV()(j, k);
    }
    return p;
}

SparseParams project_prune(int kappa, const std::vector<double>& mv) {
    std::vector<std::size_t> order(mv.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // largest magnitudes first; ties keep the lower index
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::fabs(mv[a]) > std::fabs(mv[b]);
    });
    std::vector<std::size_t> keep(order.begin(), order.begin() + kappa);
    std::sort(keep.begin(), keep.end());
    SparseParams sp;
    sp.masked_len = mv.size();
    sp.support = std::move(keep);
    sp.vals.reserve(kappa);
    for (std::size_t s : sp.support) sp.vals.push_back(mv[s]);
    return sp;
}

} // namespace

CompressedParams project(const CompressionScheme& scheme, const WeightVector& w) {
    validate_scheme(scheme, w);
    std::vector<double> mv = w.masked_values();
    check_finite(mv, "project");
    switch (scheme.kind) {
        case SchemeKind::AdaptiveQuant: {
            KMeansResult km =
                kmeans_1d(mv, scheme.codebook_size, scheme.restarts, scheme.seed);
            return QuantParams{std::move(km.codebook), std::move(km.assign)};
        }
        case SchemeKind::FixedCodebook: return project_fixed_codebook(scheme.codebook, mv);
        case SchemeKind::Binarize: {
            SignParams s;
            s.signs.resize(mv.size());
            for (std::size_t i = 0; i < mv.size(); ++i)
                s.signs[i] = mv[i] >= 0.0 ? std::int8_t{1} : std::int8_t{-1}; // sign(0) = +1
            return s;
        }
        case SchemeKind::Ternary: {
            TernaryParams t;
            t.levels.resize(mv.size());
            for (std::size_t i = 0; i < mv.size(); ++i) {
                // boundaries at +-0.5 round away from zero
                if (mv[i] >= 0.5) t.levels[i] = 1;
                else if (mv[i] <= -0.5) t.levels[i] = -1;
                else t.levels[i] = 0;
            }
            return t;
        }
        case SchemeKind::LowRank: return project_lowrank(scheme, w, mv);
        case SchemeKind::PruneL0: return project_prune(scheme.keep_count, mv);
    }
    throw ConfigError("project: unhandled scheme");
}

// ---- storage cost ----

namespace {

long ceil_log2(std::size_t k) {
    long bits = 0;
    while ((std::size_t{1} << bits) < k) ++bits;
    return bits;
}

} // namespace

StorageCost storage_cost(const CompressionScheme& scheme, const CompressedParams& theta,
                         int float_bits) {
    if (float_bits < 1) throw ConfigError("storage_cost: float_bits must be >= 1");
    if (!kind_matches(scheme.kind, theta))
        throw ConfigError("storage_cost: parameters do not match scheme");
    StorageCost c;
    const long pm = static_cast<long>(params_length(theta));
    switch (scheme.kind) {
        case SchemeKind::AdaptiveQuant: {
            const auto& q = std::get<QuantParams>(theta);
            c.theta_bits = pm * ceil_log2(q.codebook.size());
            c.overhead_bits = static_cast<long>(q.codebook.size()) * float_bits;
            break;
        }
        case SchemeKind::FixedCodebook: {
            // codebook is part of the scheme, nothing stored beyond the indices
            const auto& q = std::get<QuantParams>(theta);
            c.theta_bits = pm * ceil_log2(q.codebook.size());
            c.overhead_bits = 0;
            break;
        }
        case SchemeKind::Binarize:
            c.theta_bits = pm;
            c.overhead_bits = 0;
            break;
        case SchemeKind::Ternary:
            c.theta_bits = 2 * pm;
            c.overhead_bits = 0;
            break;
        case SchemeKind::LowRank: {
            const auto& l = std::get<LowRankParams>(theta);
            c.theta_bits = static_cast<long>((l.m + l.n) * l.r) * float_bits;
            c.overhead_bits = 0;
            break;
        }
        case SchemeKind::PruneL0: {
            const auto& sp = std::get<SparseParams>(theta);
            c.theta_bits = static_cast<long>(sp.vals.size()) * float_bits;
            c.overhead_bits = static_cast<long>(sp.support.size()) * ceil_log2(sp.masked_len);
            break;
        }
    }
    c.total_bits = c.theta_bits + c.overhead_bits;
    return c;
}

} // namespace lc
