#include "lc/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "lc/errors.hpp"
#include "lc/rng.hpp"

namespace lc {

std::string format_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void cfg_fail(const std::string& path, int line, const std::string& msg) {
    throw ConfigError(path + ":" + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& v, const std::string& path, int line,
                    const std::string& field) {
    char* end = nullptr;
    double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0')
        cfg_fail(path, line, "bad numeric value for " + field);
    return x;
}

long parse_long(const std::string& v, const std::string& path, int line,
                const std::string& field) {
    char* end = nullptr;
    long x = std::strtol(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
        cfg_fail(path, line, "bad integer value for " + field);
    return x;
}

std::uint64_t parse_u64(const std::string& v, const std::string& path, int line,
                        const std::string& field) {
    char* end = nullptr;
    unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
        cfg_fail(path, line, "bad unsigned value for " + field);
    return x;
}

bool parse_bool(const std::string& v, const std::string& path, int line,
                const std::string& field) {
    if (v == "true") return true;
    if (v == "false") return false;
    cfg_fail(path, line, field + " must be true or false");
}

std::vector<double> parse_double_list(const std::string& v, const std::string& path, int line,
                                      const std::string& field) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) cfg_fail(path, line, "empty entry in " + field);
        out.push_back(parse_double(item, path, line, field));
    }
    if (out.empty()) cfg_fail(path, line, field + " must list at least one value");
    return out;
}

} // namespace

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    RunConfig cfg;
    std::string section;
    std::set<std::string> seen;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = trim(raw);
        if (s.empty() || s[0] == '#') continue;
        if (s.front() == '[') {
            if (s.back() != ']') cfg_fail(path, line, "unterminated section header");
            section = trim(s.substr(1, s.size() - 2));
            if (section != "run" && section != "task" && section != "scheme" &&
                section != "lc" && section != "train")
                cfg_fail(path, line, "unknown section [" + section + "]");
            continue;
        }
        std::size_t eq = s.find('=');
        if (eq == std::string::npos) cfg_fail(path, line, "expected key = value");
        if (section.empty()) cfg_fail(path, line, "key outside of any [section]");
        std::string key = trim(s.substr(0, eq));
        std::string val = trim(s.substr(eq + 1));
        if (key.empty()) cfg_fail(path, line, "empty key");
        if (val.empty()) cfg_fail(path, line, "empty value for " + key);
        std::string full = section + "." + key;
        if (!seen.insert(full).second) cfg_fail(path, line, "duplicate key " + full);

        if (section == "run") {
            if (key == "seed") cfg.seed = parse_u64(val, path, line, full);
            else if (key == "out-dir") cfg.out_dir = val;
            else cfg_fail(path, line, "unknown key '" + key + "' in [run]");
        } else if (section == "task") {
            if (key == "family") {
                try {
                    cfg.task.family = family_from_name(val);
                } catch (const ConfigError& e) {
                    cfg_fail(path, line, e.what());
                }
            } else if (key == "data") cfg.task.data = val;
            else if (key == "target-column") cfg.task.target_column = val;
            else if (key == "synthetic") {
                if (val != "linear" && val != "logistic" && val != "mlp-teacher")
                    cfg_fail(path, line, "task.synthetic must be linear, logistic or mlp-teacher");
                cfg.task.synthetic = val;
            } else if (key == "n") {
                cfg.task.n = parse_long(val, path, line, full);
                if (cfg.task.n < 1) cfg_fail(path, line, "task.n must be >= 1");
            } else if (key == "d") {
                cfg.task.d = parse_long(val, path, line, full);
                if (cfg.task.d < 1) cfg_fail(path, line, "task.d must be >= 1");
            } else if (key == "noise") {
                cfg.task.noise = parse_double(val, path, line, full);
                if (cfg.task.noise < 0) cfg_fail(path, line, "task.noise must be >= 0");
            } else if (key == "hidden") {
                long h = parse_long(val, path, line, full);
                if (h < 1) cfg_fail(path, line, "task.hidden must be >= 1");
                cfg.task.hidden = static_cast<std::size_t>(h);
            } else if (key == "classes") {
                long c = parse_long(val, path, line, full);
                if (c < 2) cfg_fail(path, line, "task.classes must be >= 2");
                cfg.task.classes = static_cast<std::size_t>(c);
            } else if (key == "l2-reg") {
                cfg.task.l2_reg = parse_double(val, path, line, full);
                if (cfg.task.l2_reg < 0) cfg_fail(path, line, "task.l2-reg must be >= 0");
            } else if (key == "compress-biases") {
                cfg.task.compress_biases = parse_bool(val, path, line, full);
            } else cfg_fail(path, line, "unknown key '" + key + "' in [task]");
        } else if (section == "scheme") {
            if (key == "kind") {
                try {
                    cfg.scheme.kind = scheme_from_name(val);
                } catch (const ConfigError& e) {
                    cfg_fail(path, line, e.what());
                }
            } else if (key == "k") {
                long k = parse_long(val, path, line, full);
                if (k < 1) cfg_fail(path, line, "scheme.k must be >= 1");
                cfg.scheme.codebook_size = static_cast<int>(k);
            } else if (key == "codebook") {
                cfg.scheme.codebook = parse_double_list(val, path, line, full);
            } else if (key == "rank") {
                long r = parse_long(val, path, line, full);
                if (r < 1) cfg_fail(path, line, "scheme.rank must be >= 1");
                cfg.scheme.rank = static_cast<int>(r);
            } else if (key == "layer") {
                cfg.scheme.layer = val;
            } else if (key == "kappa") {
                long k = parse_long(val, path, line, full);
                if (k < 1) cfg_fail(path, line, "scheme.kappa must be >= 1");
                cfg.scheme.keep_count = static_cast<int>(k);
            } else if (key == "restarts") {
                long r = parse_long(val, path, line, full);
                if (r < 1) cfg_fail(path, line, "scheme.restarts must be >= 1");
                cfg.scheme.restarts = static_cast<int>(r);
            } else cfg_fail(path, line, "unknown key '" + key + "' in [scheme]");
        } else if (section == "lc") {
            if (key == "method") {
                try {
                    cfg.lc.method = method_from_name(val);
                } catch (const ConfigError& e) {
                    cfg_fail(path, line, e.what());
                }
            } else if (key == "mu0") {
                double m = parse_double(val, path, line, full);
                if (!(m > 0)) cfg_fail(path, line, "lc.mu0 must be positive");
                cfg.lc.mu0 = m;
            } else if (key == "a") {
                cfg.lc.a = parse_double(val, path, line, full);
                if (!(cfg.lc.a > 1.0)) cfg_fail(path, line, "lc.a must be > 1");
            } else if (key == "max-outer") {
                long m = parse_long(val, path, line, full);
                if (m < 1) cfg_fail(path, line, "lc.max-outer must be >= 1");
                cfg.lc.max_outer = static_cast<int>(m);
            } else if (key == "tol") {
                double t = parse_double(val, path, line, full);
                if (!(t > 0)) cfg_fail(path, line, "lc.tol must be positive");
                cfg.lc.constraint_tol = t;
            } else if (key == "lstep") {
                if (val == "fixed-step-gd") cfg.lc.lstep = LStepKind::FixedStepGd;
                else if (val == "sgd") cfg.lc.lstep = LStepKind::Sgd;
                else cfg_fail(path, line, "lc.lstep must be fixed-step-gd or sgd");
            } else if (key == "inner-iters") {
                long v2 = parse_long(val, path, line, full);
                if (v2 < 1) cfg_fail(path, line, "lc.inner-iters must be >= 1");
                cfg.lc.inner_iters = static_cast<int>(v2);
            } else if (key == "alpha") {
                cfg.lc.alpha = parse_double(val, path, line, full);
                if (!(cfg.lc.alpha > 0)) cfg_fail(path, line, "lc.alpha must be positive");
            } else if (key == "beta") {
                cfg.lc.beta = parse_double(val, path, line, full);
                if (!(cfg.lc.beta > 0)) cfg_fail(path, line, "lc.beta must be positive");
            } else if (key == "epochs") {
                long v2 = parse_long(val, path, line, full);
                if (v2 < 1) cfg_fail(path, line, "lc.epochs must be >= 1");
                cfg.lc.epochs = static_cast<int>(v2);
            } else if (key == "batch-size") {
                long v2 = parse_long(val, path, line, full);
                if (v2 < 1) cfg_fail(path, line, "lc.batch-size must be >= 1");
                cfg.lc.batch_size = static_cast<int>(v2);
            } else if (key == "steps-per-mu") {
                long v2 = parse_long(val, path, line, full);
                if (v2 < 1) cfg_fail(path, line, "lc.steps-per-mu must be >= 1");
                cfg.lc.steps_per_mu = static_cast<int>(v2);
            } else if (key == "update-multipliers") {
                cfg.lc.update_multipliers = parse_bool(val, path, line, full);
            } else cfg_fail(path, line, "unknown key '" + key + "' in [lc]");
        } else if (section == "train") {
            if (key == "max-iters") {
                cfg.train.max_iters = parse_long(val, path, line, full);
                if (cfg.train.max_iters < 1) cfg_fail(path, line, "train.max-iters must be >= 1");
            } else if (key == "grad-tol") {
                cfg.train.grad_tol = parse_double(val, path, line, full);
                if (!(cfg.train.grad_tol > 0)) cfg_fail(path, line, "train.grad-tol must be positive");
            } else if (key == "alpha") {
                cfg.train.alpha = parse_double(val, path, line, full);
                if (!(cfg.train.alpha > 0)) cfg_fail(path, line, "train.alpha must be positive");
            } else if (key == "beta") {
                cfg.train.beta = parse_double(val, path, line, full);
                if (!(cfg.train.beta > 0)) cfg_fail(path, line, "train.beta must be positive");
            } else if (key == "epochs") {
                long v2 = parse_long(val, path, line, full);
                if (v2 < 1) cfg_fail(path, line, "train.epochs must be >= 1");
                cfg.train.epochs = static_cast<int>(v2);
            } else if (key == "batch-size") {
                long v2 = parse_long(val, path, line, full);
                if (v2 < 1) cfg_fail(path, line, "train.batch-size must be >= 1");
                cfg.train.batch_size = static_cast<int>(v2);
            } else cfg_fail(path, line, "unknown key '" + key + "' in [train]");
        }
    }
    if (cfg.task.data.empty() && cfg.task.synthetic.empty())
        throw ConfigError(path + ": task needs either data or synthetic");
    if (!cfg.task.data.empty() && !cfg.task.synthetic.empty())
        throw ConfigError(path + ": task.data and task.synthetic are mutually exclusive");
    return cfg;
}

void seed_config(RunConfig& cfg) {
    cfg.scheme.seed = mix_seed(cfg.seed, 1);
    cfg.lc.seed = mix_seed(cfg.seed, 2);
}

Dataset load_csv(const std::string& path, const std::string& target_column) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open data file '" + path + "'");
    std::string raw;
    if (!std::getline(in, raw)) throw IoError(path + ": missing header row");
    std::vector<std::string> header;
    {
        std::stringstream ss(trim(raw));
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(trim(cell));
    }
    if (header.size() < 2) throw IoError(path + ": need at least one feature and a target column");
    std::size_t target = header.size();
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == target_column) target = i;
    if (target == header.size()) {
        // fall back to a 0-based column index
        char* end = nullptr;
        long idx = std::strtol(target_column.c_str(), &end, 10);
        if (end != target_column.c_str() && *end == '\0' && idx >= 0 &&
            idx < static_cast<long>(header.size()))
            target = static_cast<std::size_t>(idx);
        else
            throw IoError(path + ": no column named '" + target_column + "'");
    }
    Dataset ds;
    ds.d = header.size() - 1;
    long row = 0;
    while (std::getline(in, raw)) {
        std::string s = trim(raw);
        if (s.empty()) continue;
        ++row;
        std::vector<std::string> cells;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
        if (cells.size() != header.size())
            throw IoError(path + ": malformed row " + std::to_string(row) + " (expected " +
                          std::to_string(header.size()) + " cells, got " +
                          std::to_string(cells.size()) + ")");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (cells[i].empty())
                throw IoError(path + ": missing value in row " + std::to_string(row));
            char* end = nullptr;
            double v = std::strtod(cells[i].c_str(), &end);
            if (end == cells[i].c_str() || *end != '\0')
                throw IoError(path + ": non-numeric cell in row " + std::to_string(row) +
                              ", column '" + header[i] + "'");
            if (i == target) ds.y.push_back(v);
            else ds.X.push_back(v);
        }
    }
    ds.n = static_cast<std::size_t>(row);
    if (ds.n == 0) throw IoError(path + ": no data rows");
    return ds;
}

Dataset gen_synthetic(const std::string& kind, long n, long d, double noise, std::uint64_t seed,
                      std::size_t hidden, std::size_t classes) {
    if (n < 1 || d < 1) throw ConfigError("gen_synthetic: need n >= 1 and d >= 1");
    if (noise < 0) throw ConfigError("gen_synthetic: noise must be >= 0");
    Dataset ds;
    ds.n = static_cast<std::size_t>(n);
    ds.d = static_cast<std::size_t>(d);
    Rng rng(mix_seed(seed, 0xDA7A));
    ds.X.resize(ds.n * ds.d);
    for (auto& x : ds.X) x = rng.normal();
    ds.y.resize(ds.n);

    if (kind == "linear" || kind == "logistic") {
        ds.true_weights.resize(ds.d + 1);
        for (auto& w : ds.true_weights) w = rng.normal();
        for (std::size_t i = 0; i < ds.n; ++i) {
            double z = ds.true_weights[ds.d];
            for (std::size_t j = 0; j < ds.d; ++j) z += ds.true_weights[j] * ds.X[i * ds.d + j];
            if (kind == "linear") {
                ds.y[i] = z + noise * rng.normal();
            } else {
                ds.y[i] = z + noise * rng.normal() > 0 ? 1.0 : 0.0;
            }
        }
        return ds;
    }
    if (kind == "mlp-teacher") {
        if (hidden < 1 || classes < 2) throw ConfigError("gen_synthetic: bad teacher shape");
        std::vector<double> w1(hidden * ds.d), b1(hidden), w2(classes * hidden), b2(classes);
        double s1 = 1.0 / std::sqrt(static_cast<double>(ds.d));
        double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
        for (auto& v : w1) v = s1 * rng.normal();
        for (auto& v : b1) v = 0.5 * rng.normal();
        for (auto& v : w2) v = s2 * rng.normal();
        for (auto& v : b2) v = 0.5 * rng.normal();
        std::vector<double> h(hidden), z(classes);
        for (std::size_t i = 0; i < ds.n; ++i) {
            for (std::size_t r = 0; r < hidden; ++r) {
                double a = b1[r];
                for (std::size_t j = 0; j < ds.d; ++j) a += w1[r * ds.d + j] * ds.X[i * ds.d + j];
                h[r] = std::tanh(a);
            }
            std::size_t best = 0;
            for (std::size_t c = 0; c < classes; ++c) {
                double a = b2[c];
                for (std::size_t r = 0; r < hidden; ++r) a += w2[c * hidden + r] * h[r];
                z[c] = a + noise * rng.normal();
                if (z[c] > z[best]) best = c;
            }
            ds.y[i] = static_cast<double>(best);
        }
        return ds;
    }
    throw ConfigError("gen_synthetic: unknown kind '" + kind + "'");
}

LossTask build_task(const TaskSpec& spec, std::uint64_t data_seed) {
    Dataset ds = spec.data.empty()
                     ? gen_synthetic(spec.synthetic, spec.n, spec.d, spec.noise, data_seed,
                                     spec.hidden, spec.classes)
                     : load_csv(spec.data, spec.target_column);
    LossTask task;
    task.family = spec.family;
    task.X = std::move(ds.X);
    task.y = std::move(ds.y);
    task.n = ds.n;
    task.d = ds.d;
    task.hidden = spec.hidden;
    task.classes = spec.classes;
    task.l2_reg = spec.l2_reg;
    task.validate();
    return task;
}

// ---- model / theta / metrics files ----

namespace {

struct TokenReader {
    std::ifstream in;
    std::string path;

    explicit TokenReader(const std::string& p) : in(p), path(p) {
        if (!in) throw IoError("cannot open file '" + p + "'");
    }
    std::string next(const char* what) {
        std::string t;
        if (!(in >> t)) throw IoError(path + ": unexpected end of file, expected " + what);
        return t;
    }
    void expect(const char* lit) {
        std::string t = next(lit);
        if (t != lit) throw IoError(path + ": expected '" + lit + "', got '" + t + "'");
    }
    long integer(const char* what) {
        std::string t = next(what);
        char* end = nullptr;
        long v = std::strtol(t.c_str(), &end, 10);
        if (end == t.c_str() || *end != '\0')
            throw IoError(path + ": bad integer for " + what);
        return v;
    }
    double real(const char* what) {
        std::string t = next(what);
        char* end = nullptr;
        double v = std::strtod(t.c_str(), &end);
        if (end == t.c_str() || *end != '\0')
            throw IoError(path + ": bad real for " + what);
        return v;
    }
};

std::ofstream open_out(const std::string& path) {
    if (path.empty()) throw IoError("empty output path");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write file '" + path + "'");
    return out;
}

} // namespace

void save_model(const std::string& path, const WeightVector& w) {
    w.validate();
    std::ofstream out = open_out(path);
    out << "lcmodel 1\n";
    out << "blocks " << w.layout.size() << "\n";
    for (const auto& b : w.layout)
        out << "block " << b.name << " " << b.rows << " " << b.cols << " "
            << (b.bias ? "bias" : "matrix") << "\n";
    out << "mask ";
    for (auto m : w.mask) out << (m ? '1' : '0');
    out << "\n";
    out << "values " << w.values.size() << "\n";
    for (double v : w.values) out << format_g17(v) << "\n";
    if (!out) throw IoError("failed while writing '" + path + "'");
}

WeightVector load_model(const std::string& path) {
    TokenReader r(path);
    r.expect("lcmodel");
    long version = r.integer("format version");
    if (version != 1)
        throw IoError(path + ": unsupported model format version " + std::to_string(version));
    r.expect("blocks");
    long nb = r.integer("block count");
    if (nb < 1) throw IoError(path + ": model needs at least one block");
    WeightVector w;
    for (long i = 0; i < nb; ++i) {
        r.expect("block");
        LayerBlock b;
        b.name = r.next("block name");
        b.rows = static_cast<std::size_t>(r.integer("rows"));
        b.cols = static_cast<std::size_t>(r.integer("cols"));
        std::string kind = r.next("block kind");
        if (kind == "bias") b.bias = true;
        else if (kind != "matrix") throw IoError(path + ": block kind must be matrix or bias");
        w.layout.push_back(b);
    }
    r.expect("mask");
    std::string maskbits = r.next("mask bits");
    r.expect("values");
    long nv = r.integer("value count");
    if (nv < 0 || maskbits.size() != static_cast<std::size_t>(nv))
        throw IoError(path + ": mask length does not match value count");
    w.mask.resize(maskbits.size());
    for (std::size_t i = 0; i < maskbits.size(); ++i) {
        if (maskbits[i] != '0' && maskbits[i] != '1')
            throw IoError(path + ": mask must be a string of 0s and 1s");
        w.mask[i] = maskbits[i] == '1';
    }
    w.values.resize(static_cast<std::size_t>(nv));
    for (auto& v : w.values) v = r.real("weight value");
    w.validate();
    return w;
}

void save_theta(const std::string& path, const CompressionScheme& scheme,
                const CompressedParams& theta) {
    std::ofstream out = open_out(path);
    out << "lctheta 1\n";
    out << "kind " << scheme_name(scheme.kind) << "\n";
    if (auto* q = std::get_if<QuantParams>(&theta)) {
        out << "codebook " << q->codebook.size() << "\n";
        for (double v : q->codebook) out << format_g17(v) << "\n";
        out << "assign " << q->assign.size() << "\n";
        for (std::size_t i = 0; i < q->assign.size(); ++i)
            out << q->assign[i] << (i + 1 == q->assign.size() ? "\n" : " ");
    } else if (auto* s = std::get_if<SignParams>(&theta)) {
        out << "signs " << s->signs.size() << "\n";
        for (std::size_t i = 0; i < s->signs.size(); ++i)
            out << static_cast<int>(s->signs[i]) << (i + 1 == s->signs.size() ? "\n" : " ");
    } else if (auto* t = std::get_if<TernaryParams>(&theta)) {
        out << "levels " << t->levels.size() << "\n";
        for (std::size_t i = 0; i < t->levels.size(); ++i)
            out << static_cast<int>(t->levels[i]) << (i + 1 == t->levels.size() ? "\n" : " ");
    } else if (auto* l = std::get_if<LowRankParams>(&theta)) {
        out << "shape " << l->m << " " << l->n << " " << l->r << "\n";
        out << "u " << l->u.size() << "\n";
        for (double v : l->u) out << format_g17(v) << "\n";
        out << "v " << l->v.size() << "\n";
        for (double v : l->v) out << format_g17(v) << "\n";
    } else {
        const auto& sp = std::get<SparseParams>(theta);
        out << "length " << sp.masked_len << "\n";
        out << "support " << sp.support.size() << "\n";
        for (std::size_t i = 0; i < sp.support.size(); ++i)
            out << sp.support[i] << (i + 1 == sp.support.size() ? "\n" : " ");
        out << "vals " << sp.vals.size() << "\n";
        for (double v : sp.vals) out << format_g17(v) << "\n";
    }
    if (!out) throw IoError("failed while writing '" + path + "'");
}

ThetaFile load_theta(const std::string& path) {
    TokenReader r(path);
    r.expect("lctheta");
    long version = r.integer("format version");
    if (version != 1)
        throw IoError(path + ": unsupported theta format version " + std::to_string(version));
    r.expect("kind");
    ThetaFile tf;
    tf.kind = scheme_from_name(r.next("scheme kind"));
    switch (tf.kind) {
        case SchemeKind::AdaptiveQuant:
        case SchemeKind::FixedCodebook: {
            QuantParams q;
            r.expect("codebook");
            long k = r.integer("codebook size");
            if (k < 1) throw IoError(path + ": codebook size must be >= 1");
            q.codebook.resize(static_cast<std::size_t>(k));
            for (auto& v : q.codebook) v = r.real("codebook value");
            r.expect("assign");
            long n = r.integer("assignment count");
            q.assign.resize(static_cast<std::size_t>(n));
            for (auto& v : q.assign) {
                long a = r.integer("assignment");
                if (a < 0 || a >= k) throw IoError(path + ": assignment out of range");
                v = static_cast<std::uint32_t>(a);
            }
            tf.params = std::move(q);
            break;
        }
        case SchemeKind::Binarize: {
            SignParams s;
            r.expect("signs");
            long n = r.integer("sign count");
            s.signs.resize(static_cast<std::size_t>(n));
            for (auto& v : s.signs) {
                long x = r.integer("sign");
                if (x != 1 && x != -1) throw IoError(path + ": signs must be +1 or -1");
                v = static_cast<std::int8_t>(x);
            }
            tf.params = std::move(s);
            break;
        }
        case SchemeKind::Ternary: {
            TernaryParams t;
            r.expect("levels");
            long n = r.integer("level count");
            t.levels.resize(static_cast<std::size_t>(n));
            for (auto& v : t.levels) {
                long x = r.integer("level");
                if (x < -1 || x > 1) throw IoError(path + ": levels must be -1, 0 or +1");
                v = static_cast<std::int8_t>(x);
            }
            tf.params = std::move(t);
            break;
        }
        case SchemeKind::LowRank: {
            LowRankParams l;
            r.expect("shape");
            l.m = static_cast<std::size_t>(r.integer("rows"));
            l.n = static_cast<std::size_t>(r.integer("cols"));
            l.r = static_cast<std::size_t>(r.integer("rank"));
            r.expect("u");
            long nu = r.integer("u size");
            if (static_cast<std::size_t>(nu) != l.m * l.r)
                throw IoError(path + ": u factor size mismatch");
            l.u.resize(static_cast<std::size_t>(nu));
            for (auto& v : l.u) v = r.real("u value");
            r.expect("v");
            long nv = r.integer("v size");
            if (static_cast<std::size_t>(nv) != l.n * l.r)
                throw IoError(path + ": v factor size mismatch");
            l.v.resize(static_cast<std::size_t>(nv));
            for (auto& v : l.v) v = r.real("v value");
            tf.params = std::move(l);
            break;
        }
        case SchemeKind::PruneL0: {
            SparseParams sp;
            r.expect("length");
            sp.masked_len = static_cast<std::size_t>(r.integer("masked length"));
            r.expect("support");
            long ns = r.integer("support size");
            sp.support.resize(static_cast<std::size_t>(ns));
            for (auto& v : sp.support) v = static_cast<std::size_t>(r.integer("support index"));
            r.expect("vals");
            long nv = r.integer("value count");
            if (nv != ns) throw IoError(path + ": support and vals sizes differ");
            sp.vals.resize(static_cast<std::size_t>(nv));
            for (auto& v : sp.vals) v = r.real("sparse value");
            tf.params = std::move(sp);
            break;
        }
    }
    // must decode cleanly
    decode_masked(tf.params);
    return tf;
}

void append_metrics(const std::string& path, const MetricsRecord& rec) {
    if (path.empty()) throw IoError("metrics path is empty");
    std::ofstream out(path, std::ios::app);
    if (!out) throw IoError("cannot append to metrics file '" + path + "'");
    out << rec.k << " " << format_g17(rec.mu) << " " << format_g17(rec.loss_w) << " "
        << format_g17(rec.loss_compressed) << " " << format_g17(rec.constraint_norm) << " "
        << format_g17(rec.lambda_norm) << " " << rec.lstep_iters_used << " "
        << format_g17(rec.wallclock_ms) << "\n";
    if (!out) throw IoError("failed while appending to '" + path + "'");
}

std::vector<MetricsRecord> load_metrics(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open metrics file '" + path + "'");
    std::vector<MetricsRecord> out;
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = trim(raw);
        if (s.empty()) continue;
        std::stringstream ss(s);
        MetricsRecord rec;
        std::string extra;
        if (!(ss >> rec.k >> rec.mu >> rec.loss_w >> rec.loss_compressed >> rec.constraint_norm >>
              rec.lambda_norm >> rec.lstep_iters_used >> rec.wallclock_ms) ||
            (ss >> extra))
            throw IoError(path + ": malformed metrics record on line " + std::to_string(line));
        out.push_back(rec);
    }
    return out;
}

} // namespace lc
