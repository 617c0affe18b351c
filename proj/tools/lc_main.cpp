// lc: model compression as constrained optimization.
//
// Subcommands: train-ref, compress, baseline, oracle, evaluate, report, sweep.
// Exit codes: 0 success, 1 converged with warnings, 2 not converged,
// 3 config error, 4 numeric error, 5 I/O error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "lc/compress.hpp"
#include "lc/driver.hpp"
#include "lc/errors.hpp"
#include "lc/io.hpp"
#include "lc/loss.hpp"
#include "lc/oracles.hpp"
#include "lc/rng.hpp"

namespace fs = std::filesystem;
using namespace lc;

namespace {

// sub-seed tags; 1 and 2 (scheme, lc) are assigned by seed_config
constexpr std::uint64_t kTrainTag = 3;
constexpr std::uint64_t kDataTag = 4;
constexpr std::uint64_t kBaselineTag = 5;

struct CommonOpts {
    std::string config;
    std::uint64_t seed = 0;
    std::string out_dir;
    std::string method;
    std::string scheme;
    int level = 0;
    double mu0 = 0.0, a = 0.0, tol = 0.0;
    int max_outer = 0;

    CLI::Option *o_seed = nullptr, *o_out = nullptr, *o_method = nullptr, *o_scheme = nullptr,
                *o_level = nullptr, *o_mu0 = nullptr, *o_a = nullptr, *o_tol = nullptr,
                *o_max_outer = nullptr;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config, "run configuration file")->required();
        o_seed = cmd->add_option("--seed", seed, "master seed (overrides the config)");
        o_out = cmd->add_option("--out-dir", out_dir, "output directory (overrides the config)");
        o_method = cmd->add_option("--method", method, "qp | al");
        o_scheme = cmd->add_option("--scheme", scheme,
                                   "adaptive-quant | fixed-codebook | binarize | ternary | "
                                   "low-rank | prune-l0");
        o_level = cmd->add_option("--level", level,
                                  "compression level: K (adaptive-quant), r (low-rank) or "
                                  "kappa (prune-l0)");
        o_mu0 = cmd->add_option("--mu0", mu0, "initial penalty weight");
        o_a = cmd->add_option("--a", a, "penalty multiplier per outer iteration (> 1)");
        o_tol = cmd->add_option("--tol", tol, "constraint norm tolerance");
        o_max_outer = cmd->add_option("--max-outer", max_outer, "outer iteration cap");
    }
};

void apply_level(CompressionScheme& scheme, int level) {
    if (level < 1) throw ConfigError("--level must be >= 1");
    switch (scheme.kind) {
        case SchemeKind::AdaptiveQuant: scheme.codebook_size = level; return;
        case SchemeKind::LowRank: scheme.rank = level; return;
        case SchemeKind::PruneL0: scheme.keep_count = level; return;
        default:
            throw ConfigError(std::string("--level does not apply to scheme ") +
                              scheme_name(scheme.kind));
    }
}

RunConfig resolve_config(const CommonOpts& c) {
    RunConfig cfg = load_config(c.config);
    if (*c.o_seed) cfg.seed = c.seed;
    if (*c.o_out) cfg.out_dir = c.out_dir;
    if (*c.o_method) cfg.lc.method = method_from_name(c.method);
    if (*c.o_scheme) cfg.scheme.kind = scheme_from_name(c.scheme);
    if (*c.o_level) apply_level(cfg.scheme, c.level);
    if (*c.o_mu0) {
        if (!(c.mu0 > 0)) throw ConfigError("--mu0 must be positive");
        cfg.lc.mu0 = c.mu0;
    }
    if (*c.o_a) {
        if (!(c.a > 1.0)) throw ConfigError("--a must be > 1");
        cfg.lc.a = c.a;
    }
    if (*c.o_tol) {
        if (!(c.tol > 0)) throw ConfigError("--tol must be positive");
        cfg.lc.constraint_tol = c.tol;
    }
    if (*c.o_max_outer) {
        if (c.max_outer < 1) throw ConfigError("--max-outer must be >= 1");
        cfg.lc.max_outer = c.max_outer;
    }
    seed_config(cfg);
    return cfg;
}

std::string out_path(const RunConfig& cfg, const char* name) {
    return (fs::path(cfg.out_dir) / name).string();
}

void ensure_out_dir(const RunConfig& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + cfg.out_dir + "': " + ec.message());
}

void reset_file(const std::string& path) {
    std::error_code ec;
    fs::remove(path, ec);
}

std::ofstream open_summary(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    return out;
}

LossTask task_from(const RunConfig& cfg) {
    return build_task(cfg.task, mix_seed(cfg.seed, kDataTag));
}

WeightVector load_reference(const RunConfig& cfg, const LossTask& task,
                            const std::string& model_flag) {
    std::string path = model_flag.empty() ? out_path(cfg, "model.txt") : model_flag;
    WeightVector w = load_model(path);
    WeightVector proto = make_initial_weights(task, 0);
    if (!same_layout(w, proto))
        throw ConfigError("model '" + path + "' does not match the task layout");
    apply_scheme_mask(w, cfg.scheme, cfg.task.compress_biases);
    return w;
}

double constraint_norm_of(const WeightVector& w, const CompressedParams& theta) {
    std::vector<double> mv = w.masked_values();
    std::vector<double> dv = decode_masked(theta);
    for (std::size_t i = 0; i < mv.size(); ++i) mv[i] -= dv[i];
    return norm2(mv);
}

// ---- train-ref ----

TrainResult run_train(const RunConfig& cfg, const LossTask& task) {
    TrainOptions opts;
    opts.seed = mix_seed(cfg.seed, kTrainTag);
    opts.max_iters = cfg.train.max_iters;
    opts.grad_tol = cfg.train.grad_tol;
    opts.alpha = cfg.train.alpha;
    opts.beta = cfg.train.beta;
    opts.epochs = cfg.train.epochs;
    opts.batch_size = cfg.train.batch_size;

    std::string metrics_path = out_path(cfg, "train_metrics.txt");
    reset_file(metrics_path);
    opts.log_every = task.family == LossFamily::MlpXent
                         ? std::max(1, cfg.train.epochs / 20)
                         : std::max<long>(1, cfg.train.max_iters / 20);
    opts.log = [&](long iter, double loss, double grad_norm) {
        MetricsRecord rec;
        rec.k = static_cast<int>(iter);
        rec.loss_w = loss;
        rec.loss_compressed = loss;
        rec.constraint_norm = grad_norm; // optimality residual while training
        append_metrics(metrics_path, rec);
    };
    TrainResult res = train_reference(task, opts);
    MetricsRecord fin;
    fin.k = static_cast<int>(res.iters);
    fin.loss_w = res.loss;
    fin.loss_compressed = res.loss;
    fin.constraint_norm = res.grad_norm;
    fin.lstep_iters_used = res.iters;
    append_metrics(metrics_path, fin);
    save_model(out_path(cfg, "model.txt"), res.w);
    return res;
}

int cmd_train_ref(const CommonOpts& c) {
    RunConfig cfg = resolve_config(c);
    ensure_out_dir(cfg);
    LossTask task = task_from(cfg);
    TrainResult res = run_train(cfg, task);

    std::ofstream sum = open_summary(out_path(cfg, "summary.txt"));
    sum << "command train-ref\n"
        << "family " << family_name(task.family) << "\n"
        << "seed " << cfg.seed << "\n"
        << "iters " << res.iters << "\n"
        << "loss " << format_g17(res.loss) << "\n"
        << "grad_norm " << format_g17(res.grad_norm) << "\n"
        << "converged " << (res.converged ? 1 : 0) << "\n";
    std::cout << "trained " << family_name(task.family) << " reference: loss "
              << format_g17(res.loss) << ", grad norm " << format_g17(res.grad_norm) << ", "
              << res.iters << " iters\n";
    if (!res.converged) {
        std::cerr << "warning: iteration budget reached before the gradient tolerance\n";
        return 1;
    }
    return 0;
}

// ---- compress ----

struct CompressOutput {
    LCResult res;
    StorageCost cost;
    double loss_ref = 0.0;
    double loss_w = 0.0;
    double loss_compressed = 0.0;
    double constraint_norm = 0.0;
};

CompressOutput run_compress(const RunConfig& cfg, const std::string& model_flag) {
    ensure_out_dir(cfg);
    LossTask task = task_from(cfg);
    WeightVector w_ref = load_reference(cfg, task, model_flag);
    validate_scheme(cfg.scheme, w_ref);

    CompressOutput out;
    out.loss_ref = loss_eval(task, w_ref);
    out.res = lc_run(task, cfg.scheme, cfg.lc, w_ref);

    save_theta(out_path(cfg, "theta.txt"), cfg.scheme, out.res.state.theta);
    save_model(out_path(cfg, "compressed_model.txt"), out.res.compressed);
    std::string metrics_path = out_path(cfg, "metrics.txt");
    reset_file(metrics_path);
    for (const auto& rec : out.res.state.history) append_metrics(metrics_path, rec);

    out.cost = storage_cost(cfg.scheme, out.res.state.theta, 64);
    const auto& last = out.res.state.history.back();
    out.loss_w = last.loss_w;
    out.loss_compressed = last.loss_compressed;
    out.constraint_norm = last.constraint_norm;
    return out;
}

void write_compress_summary(const RunConfig& cfg, const CompressOutput& o, int code) {
    std::ofstream sum = open_summary(out_path(cfg, "summary.txt"));
    sum << "command compress\n"
        << "method " << method_name(cfg.lc.method) << "\n"
        << "scheme " << scheme_name(cfg.scheme.kind) << "\n"
        << "seed " << cfg.seed << "\n"
        << "outer_iters " << o.res.state.k << "\n"
        << "mu0 " << format_g17(o.res.mu0_used) << "\n"
        << "tol " << format_g17(o.res.tol_used) << "\n"
        << "converged " << (o.res.converged ? 1 : 0) << "\n"
        << "stuck_at_dc " << (o.res.stuck_at_dc ? 1 : 0) << "\n"
        << "loss_ref " << format_g17(o.loss_ref) << "\n"
        << "loss_w " << format_g17(o.loss_w) << "\n"
        << "loss_compressed " << format_g17(o.loss_compressed) << "\n"
        << "constraint_norm " << format_g17(o.constraint_norm) << "\n"
        << "storage_bits " << o.cost.total_bits << "\n"
        << "exit_code " << code << "\n";
}

int compress_exit_code(const LCResult& res) {
    if (!res.converged) return 2;
    return res.stuck_at_dc ? 1 : 0;
}

int cmd_compress(const CommonOpts& c, const std::string& model_flag) {
    RunConfig cfg = resolve_config(c);
    CompressOutput o = run_compress(cfg, model_flag);
    int code = compress_exit_code(o.res);
    write_compress_summary(cfg, o, code);
    std::cout << method_name(cfg.lc.method) << " " << scheme_name(cfg.scheme.kind) << ": "
              << o.res.state.k << " outer iters, loss " << format_g17(o.loss_compressed)
              << " (reference " << format_g17(o.loss_ref) << "), constraint norm "
              << format_g17(o.constraint_norm) << ", " << o.cost.total_bits << " bits\n";
    if (o.res.stuck_at_dc)
        std::cerr << "warning: compressed parameters stayed at the direct-compression point "
                     "while the constraint was unmet; try a smaller a\n";
    if (!o.res.converged)
        std::cerr << "warning: outer iteration cap reached before the constraint tolerance\n";
    return code;
}

// ---- baseline ----

int cmd_baseline(const CommonOpts& c, const std::string& kind, const std::string& model_flag,
                 int rounds, bool exact, int budget) {
    RunConfig cfg = resolve_config(c);
    ensure_out_dir(cfg);
    LossTask task = task_from(cfg);
    WeightVector w_ref = load_reference(cfg, task, model_flag);
    validate_scheme(cfg.scheme, w_ref);
    double loss_ref = loss_eval(task, w_ref);
    std::string metrics_path = out_path(cfg, "metrics.txt");
    reset_file(metrics_path);
    std::ofstream sum = open_summary(out_path(cfg, "summary.txt"));

    if (kind == "dc") {
        DCResult dc = dc_run(task, cfg.scheme, w_ref);
        save_theta(out_path(cfg, "theta.txt"), cfg.scheme, dc.theta);
        save_model(out_path(cfg, "compressed_model.txt"), dc.model);
        MetricsRecord rec;
        rec.loss_w = loss_ref;
        rec.loss_compressed = dc.loss;
        rec.constraint_norm = constraint_norm_of(w_ref, dc.theta);
        append_metrics(metrics_path, rec);
        StorageCost cost = storage_cost(cfg.scheme, dc.theta, 64);
        sum << "command baseline\nkind dc\nscheme " << scheme_name(cfg.scheme.kind) << "\nseed "
            << cfg.seed << "\nloss_ref " << format_g17(loss_ref) << "\nloss_compressed "
            << format_g17(dc.loss) << "\nconstraint_norm " << format_g17(rec.constraint_norm)
            << "\nstorage_bits " << cost.total_bits << "\n";
        std::cout << "dc " << scheme_name(cfg.scheme.kind) << ": loss " << format_g17(dc.loss)
                  << " (reference " << format_g17(loss_ref) << ")\n";
        return 0;
    }
    if (kind == "idc") {
        IdcOptions opts;
        opts.rounds = rounds;
        opts.exact_solve = exact;
        opts.budget = budget;
        opts.alpha = cfg.lc.alpha;
        opts.beta = cfg.lc.beta;
        opts.batch_size = cfg.lc.batch_size;
        opts.seed = mix_seed(cfg.seed, kBaselineTag);
        IdcResult idc = idc_run(task, cfg.scheme, w_ref, opts);
        save_theta(out_path(cfg, "theta.txt"), cfg.scheme, idc.theta);
        save_model(out_path(cfg, "compressed_model.txt"), idc.model);
        for (const auto& r : idc.history) {
            MetricsRecord rec;
            rec.k = r.round;
            rec.loss_w = r.loss_w;
            rec.loss_compressed = r.loss_compressed;
            rec.constraint_norm = r.theta_change; // decode(theta) drift between rounds
            append_metrics(metrics_path, rec);
        }
        sum << "command baseline\nkind idc\nscheme " << scheme_name(cfg.scheme.kind) << "\nseed "
            << cfg.seed << "\nrounds " << idc.history.size() << "\nloss_ref "
            << format_g17(loss_ref) << "\nloss_compressed "
            << format_g17(idc.history.back().loss_compressed) << "\ncycling "
            << (idc.cycling ? 1 : 0) << "\ncycle_round " << idc.cycle_round << "\n";
        std::cout << "idc " << scheme_name(cfg.scheme.kind) << ": " << idc.history.size()
                  << " rounds, loss " << format_g17(idc.history.back().loss_compressed)
                  << (idc.cycling ? " (cycling detected)" : "") << "\n";
        return 0;
    }
    if (kind == "retrain") {
        if (cfg.scheme.kind != SchemeKind::PruneL0)
            throw ConfigError("baseline retrain requires scheme prune-l0");
        RetrainResult rr = retrain_after_prune(task, w_ref, cfg.scheme.keep_count, budget);
        save_theta(out_path(cfg, "theta.txt"), cfg.scheme, CompressedParams(rr.params));
        save_model(out_path(cfg, "compressed_model.txt"), rr.w);
        MetricsRecord rec;
        rec.loss_w = loss_ref;
        rec.loss_compressed = rr.loss;
        append_metrics(metrics_path, rec);
        sum << "command baseline\nkind retrain\nscheme prune-l0\nseed " << cfg.seed << "\nkappa "
            << cfg.scheme.keep_count << "\nloss_ref " << format_g17(loss_ref)
            << "\nloss_compressed " << format_g17(rr.loss) << "\n";
        std::cout << "retrain kappa=" << cfg.scheme.keep_count << ": loss " << format_g17(rr.loss)
                  << " (reference " << format_g17(loss_ref) << ")\n";
        return 0;
    }
    throw ConfigError("baseline kind must be dc, idc or retrain");
}

// ---- oracle ----

int cmd_oracle(const CommonOpts& c, const std::string& model_flag) {
    RunConfig cfg = resolve_config(c);
    ensure_out_dir(cfg);
    LossTask task = task_from(cfg);
    WeightVector w = load_reference(cfg, task, model_flag);
    validate_scheme(cfg.scheme, w);
    std::string path = out_path(cfg, "oracle.txt");
    std::ofstream out = open_summary(path);
    out << "lcoracle 1\n";
    out << "scheme " << scheme_name(cfg.scheme.kind) << "\n";

    switch (cfg.scheme.kind) {
        case SchemeKind::AdaptiveQuant: {
            auto r = oracle_quant(w.masked_values(), cfg.scheme.codebook_size);
            out << "distortion " << format_g17(r.distortion) << "\n";
            out << "codebook " << r.params.codebook.size() << "\n";
            for (double v : r.params.codebook) out << format_g17(v) << "\n";
            std::cout << "quant oracle: distortion " << format_g17(r.distortion) << "\n";
            break;
        }
        case SchemeKind::Binarize: {
            auto r = oracle_sign_loss(task, w);
            out << "loss " << format_g17(r.loss) << "\n";
            out << "signs " << r.params.signs.size() << "\n";
            for (std::size_t i = 0; i < r.params.signs.size(); ++i)
                out << static_cast<int>(r.params.signs[i])
                    << (i + 1 == r.params.signs.size() ? "\n" : " ");
            std::cout << "sign oracle: loss " << format_g17(r.loss) << "\n";
            break;
        }
        case SchemeKind::PruneL0: {
            auto r = oracle_support_loss(task, w, cfg.scheme.keep_count);
            out << "loss " << format_g17(r.loss) << "\n";
            out << "support " << r.params.support.size() << "\n";
            for (std::size_t i = 0; i < r.params.support.size(); ++i)
                out << r.params.support[i] << (i + 1 == r.params.support.size() ? "\n" : " ");
            std::cout << "support oracle: loss " << format_g17(r.loss) << "\n";
            break;
        }
        case SchemeKind::LowRank: {
            const LayerBlock& blk = w.block(cfg.scheme.layer);
            std::size_t off = w.block_offset(cfg.scheme.layer);
            std::vector<double> mat(w.values.begin() + off, w.values.begin() + off + blk.size());
            double resid = oracle_lowrank(mat, blk.rows, blk.cols, cfg.scheme.rank);
            out << "residual " << format_g17(resid) << "\n";
            out << "rank " << cfg.scheme.rank << "\n";
            std::cout << "low-rank oracle: residual " << format_g17(resid) << "\n";
            break;
        }
        default:
            throw ConfigError(std::string("no oracle for scheme ") +
                              scheme_name(cfg.scheme.kind));
    }
    if (!out) throw IoError("failed while writing '" + path + "'");
    return 0;
}

// ---- evaluate ----

int cmd_evaluate(const CommonOpts& c, const std::string& model_flag,
                 const std::string& theta_flag) {
    RunConfig cfg = resolve_config(c);
    ensure_out_dir(cfg);
    LossTask task = task_from(cfg);
    WeightVector w = load_reference(cfg, task, model_flag);
    std::string path = out_path(cfg, "eval.txt");
    std::ofstream out = open_summary(path);
    double loss = loss_eval(task, w);
    out << "command evaluate\nloss " << format_g17(loss) << "\n";
    std::cout << "loss " << format_g17(loss) << "\n";
    if (!theta_flag.empty()) {
        ThetaFile tf = load_theta(theta_flag);
        if (tf.kind != cfg.scheme.kind)
            throw ConfigError("theta file holds " + std::string(scheme_name(tf.kind)) +
                              " parameters but the scheme is " + scheme_name(cfg.scheme.kind));
        WeightVector wc = decompress(cfg.scheme, tf.params, w);
        double loss_c = loss_eval(task, wc);
        double cnorm = constraint_norm_of(w, tf.params);
        StorageCost cost = storage_cost(cfg.scheme, tf.params, 64);
        out << "loss_compressed " << format_g17(loss_c) << "\nconstraint_norm "
            << format_g17(cnorm) << "\nstorage_bits " << cost.total_bits << "\n";
        std::cout << "loss_compressed " << format_g17(loss_c) << "\nconstraint_norm "
                  << format_g17(cnorm) << "\nstorage_bits " << cost.total_bits << "\n";
    }
    if (!out) throw IoError("failed while writing '" + path + "'");
    return 0;
}

// ---- report ----

bool read_oracle_loss(const std::string& path, double& loss_out) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open oracle file '" + path + "'");
    std::string tok;
    if (!(in >> tok) || tok != "lcoracle") throw IoError(path + ": not an oracle report");
    while (in >> tok) {
        if (tok == "loss" || tok == "distortion" || tok == "residual") {
            if (!(in >> loss_out)) throw IoError(path + ": bad oracle value");
            return tok == "loss";
        }
    }
    throw IoError(path + ": no optimum value found");
}

int cmd_report(const std::vector<std::string>& metrics_paths, const std::string& out_dir,
               const std::string& oracle_path) {
    if (metrics_paths.empty()) throw ConfigError("report needs at least one metrics file");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + out_dir + "'");

    double oracle_loss = 0.0;
    bool have_oracle = false;
    if (!oracle_path.empty()) have_oracle = read_oracle_loss(oracle_path, oracle_loss);

    std::string report_path = (fs::path(out_dir) / "report.txt").string();
    std::string plot_path = (fs::path(out_dir) / "plot_data.txt").string();
    std::ofstream rep = open_summary(report_path);
    std::ofstream plot = open_summary(plot_path);

    std::ostringstream table;
    table << "# file records final_k final_mu loss_w loss_compressed constraint_norm";
    if (have_oracle) table << " oracle_loss rel_gap";
    table << "\n";
    for (const auto& p : metrics_paths) {
        auto recs = load_metrics(p);
        if (recs.empty()) throw IoError(p + ": empty metrics file");
        const auto& last = recs.back();
        table << p << " " << recs.size() << " " << last.k << " " << format_g17(last.mu) << " "
              << format_g17(last.loss_w) << " " << format_g17(last.loss_compressed) << " "
              << format_g17(last.constraint_norm);
        if (have_oracle) {
            double denom = std::max(std::fabs(oracle_loss), 1e-12);
            table << " " << format_g17(oracle_loss) << " "
                  << format_g17((last.loss_compressed - oracle_loss) / denom);
        }
        table << "\n";

        plot << "# series " << p << "\n";
        plot << "# columns: k mu loss_w loss_compressed constraint_norm lambda_norm\n";
        for (const auto& r : recs)
            plot << r.k << " " << format_g17(r.mu) << " " << format_g17(r.loss_w) << " "
                 << format_g17(r.loss_compressed) << " " << format_g17(r.constraint_norm) << " "
                 << format_g17(r.lambda_norm) << "\n";
        plot << "\n";
    }
    rep << table.str();
    std::cout << table.str();
    if (!rep || !plot) throw IoError("failed while writing report files");
    return 0;
}

// ---- sweep ----

std::vector<long> parse_int_list(const std::string& s, const char* what) {
    std::vector<long> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        char* end = nullptr;
        long v = std::strtol(item.c_str(), &end, 10);
        if (end == item.c_str() || *end != '\0')
            throw ConfigError(std::string("bad integer in ") + what + ": '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError(std::string(what) + " must list at least one value");
    return out;
}

int cmd_sweep(const CommonOpts& c, const std::string& seeds_csv, const std::string& levels_csv) {
    RunConfig base = resolve_config(c);
    ensure_out_dir(base);
    std::vector<long> seeds = seeds_csv.empty()
                                  ? std::vector<long>{static_cast<long>(base.seed)}
                                  : parse_int_list(seeds_csv, "--seeds");
    std::vector<long> levels;
    if (!levels_csv.empty()) levels = parse_int_list(levels_csv, "--levels");

    std::string sweep_path = (fs::path(base.out_dir) / "sweep.txt").string();
    std::ofstream sw = open_summary(sweep_path);
    sw << "# seed level status converged loss_compressed constraint_norm storage_bits\n";

    int worst = 0;
    for (long seed : seeds) {
        std::vector<long> lv = levels.empty() ? std::vector<long>{-1} : levels;
        for (long level : lv) {
            RunConfig cfg = base;
            cfg.seed = static_cast<std::uint64_t>(seed);
            if (level >= 0) apply_level(cfg.scheme, static_cast<int>(level));
            seed_config(cfg);
            std::string tag = "s" + std::to_string(seed) +
                              (level >= 0 ? "_l" + std::to_string(level) : "");
            cfg.out_dir = (fs::path(base.out_dir) / tag).string();
            int status = 0;
            std::string loss = "-", cnorm = "-", bits = "-", conv = "-";
            try {
                ensure_out_dir(cfg);
                LossTask task = task_from(cfg);
                run_train(cfg, task);
                CompressOutput o = run_compress(cfg, "");
                status = compress_exit_code(o.res);
                write_compress_summary(cfg, o, status);
                loss = format_g17(o.loss_compressed);
                cnorm = format_g17(o.constraint_norm);
                bits = std::to_string(o.cost.total_bits);
                conv = o.res.converged ? "1" : "0";
            } catch (const ConfigError& e) {
                status = 3;
                std::cerr << tag << ": config error: " << e.what() << "\n";
            } catch (const NumericError& e) {
                status = 4;
                std::cerr << tag << ": numeric error: " << e.what() << "\n";
            } catch (const IoError& e) {
                status = 5;
                std::cerr << tag << ": io error: " << e.what() << "\n";
            }
            worst = std::max(worst, status);
            sw << seed << " " << (level >= 0 ? std::to_string(level) : "-") << " " << status << " "
               << conv << " " << loss << " " << cnorm << " " << bits << "\n";
            std::cout << "sweep " << tag << ": status " << status << ", loss " << loss << "\n";
        }
    }
    if (!sw) throw IoError("failed while writing '" + sweep_path + "'");
    return worst;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"model compression as constrained optimization: alternating "
                 "learning/compression steps, baselines and exhaustive oracles"};
    app.require_subcommand(1);

    CommonOpts c_train, c_comp, c_base, c_orc, c_eval, c_sweep;
    std::string model_flag, theta_flag, base_kind, seeds_csv, levels_csv, report_out = "out";
    std::string oracle_flag;
    std::vector<std::string> metrics_paths;
    int idc_rounds = 10, budget = 100;
    bool exact = false;

    auto* t = app.add_subcommand("train-ref", "train the reference model");
    c_train.attach(t);

    auto* comp = app.add_subcommand("compress", "run the penalty/multiplier compression loop");
    c_comp.attach(comp);
    comp->add_option("--model", model_flag, "reference model file (default <out-dir>/model.txt)");

    auto* b = app.add_subcommand("baseline", "direct compression, iterated DC or retraining");
    c_base.attach(b);
    b->add_option("--kind", base_kind, "dc | idc | retrain")->required();
    b->add_option("--model", model_flag, "reference model file (default <out-dir>/model.txt)");
    b->add_option("--rounds", idc_rounds, "idc rounds");
    b->add_flag("--exact", exact, "idc: solve each retrain exactly (least squares only)");
    b->add_option("--budget", budget, "inner iteration budget for idc/retrain");

    auto* o = app.add_subcommand("oracle", "exhaustive ground-truth optimum for tiny instances");
    c_orc.attach(o);
    o->add_option("--model", model_flag, "reference model file (default <out-dir>/model.txt)");

    auto* e = app.add_subcommand("evaluate", "evaluate a model file (and optional theta) on the task");
    c_eval.attach(e);
    e->add_option("--model", model_flag, "model file (default <out-dir>/model.txt)");
    e->add_option("--theta", theta_flag, "compressed parameter file");

    auto* r = app.add_subcommand("report", "summarize metrics files into a table and plot data");
    r->add_option("files", metrics_paths, "metrics files")->required()->expected(-1);
    r->add_option("--out-dir", report_out, "output directory for report.txt and plot_data.txt");
    r->add_option("--oracle", oracle_flag, "oracle report for gap columns");

    auto* s = app.add_subcommand("sweep", "train + compress over seeds and levels");
    c_sweep.attach(s);
    s->add_option("--seeds", seeds_csv, "comma-separated seed list");
    s->add_option("--levels", levels_csv, "comma-separated level list");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        int code = app.exit(err);
        return code == 0 ? 0 : 3;
    }

    try {
        if (t->parsed()) return cmd_train_ref(c_train);
        if (comp->parsed()) return cmd_compress(c_comp, model_flag);
        if (b->parsed()) return cmd_baseline(c_base, base_kind, model_flag, idc_rounds, exact, budget);
        if (o->parsed()) return cmd_oracle(c_orc, model_flag);
        if (e->parsed()) return cmd_evaluate(c_eval, model_flag, theta_flag);
        if (r->parsed()) return cmd_report(metrics_paths, report_out, oracle_flag);
        if (s->parsed()) return cmd_sweep(c_sweep, seeds_csv, levels_csv);
    } catch (const ConfigError& err) {
        std::cerr << "config error: " << err.what() << "\n";
        return 3;
    } catch (const NumericError& err) {
        std::cerr << "numeric error: " << err.what() << "\n";
        return 4;
    } catch (const IoError& err) {
        std::cerr << "io error: " << err.what() << "\n";
        return 5;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 4;
    }
    return 0;
}
