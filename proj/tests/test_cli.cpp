#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lc/io.hpp"
#include "lc/rng.hpp"
#include "lc/weights.hpp"

using namespace lc;
namespace fs = std::filesystem;

namespace {

const std::string& cli_path() {
    static std::string path = [] {
        const char* p = std::getenv("LC_CLI_PATH");
        REQUIRE_MESSAGE(p != nullptr, "LC_CLI_PATH must point at the lc binary");
        return std::string(p);
    }();
    return path;
}

fs::path scratch_root() {
    static fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "lc_cli_tests";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

fs::path fresh_dir(const std::string& name) {
    fs::path p = scratch_root() / name;
    fs::create_directories(p);
    return p;
}

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

RunResult run_cli(const std::vector<std::string>& args, const fs::path& dir) {
    fs::path out = dir / "stdout.txt";
    fs::path err = dir / "stderr.txt";
    std::string cmd = "'" + cli_path() + "'";
    for (const auto& a : args) cmd += " '" + a + "'";
    cmd += " > '" + out.string() + "' 2> '" + err.string() + "'";
    int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

std::string write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
    return path.string();
}

// synthetic least-squares run config; extra lines are appended to the section
std::string ls_config(const fs::path& dir, int seed, const std::string& scheme_lines,
                      const std::string& lc_lines = "", const std::string& task_lines = "") {
    std::ostringstream text;
    text << "[run]\nseed = " << seed << "\n"
         << "[task]\nsynthetic = linear\nn = 30\nd = 6\nnoise = 0.05\n" << task_lines
         << "[scheme]\n" << scheme_lines << "[lc]\n" << lc_lines;
    return write_text(dir / "run.ini", text.str());
}

std::string summary_value(const fs::path& dir, const std::string& key,
                          const std::string& file = "summary.txt") {
    std::ifstream in(dir / file);
    std::string line;
    while (std::getline(in, line))
        if (line.rfind(key + " ", 0) == 0) return line.substr(key.size() + 1);
    FAIL("key '", key, "' not found in ", (dir / file).string());
    return "";
}

double summary_number(const fs::path& dir, const std::string& key,
                      const std::string& file = "summary.txt") {
    return std::strtod(summary_value(dir, key, file).c_str(), nullptr);
}

// teacher with +-1 weights and a free bias, targets written exactly
std::string sign_teacher_csv(const fs::path& path, int n, int d, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0xC57));
    std::vector<double> teacher(d);
    for (int j = 0; j < d; ++j) teacher[j] = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double bias = 0.25;
    std::ostringstream text;
    for (int j = 0; j < d; ++j) text << "x" << j << ",";
    text << "target\n";
    for (int i = 0; i < n; ++i) {
        double z = bias;
        for (int j = 0; j < d; ++j) {
            double x = rng.normal();
            z += teacher[j] * x;
            text << format_g17(x) << ",";
        }
        text << format_g17(z) << "\n";
    }
    return write_text(path, text.str());
}

} // namespace

TEST_CASE("help and argument errors use the documented exit codes") {
    fs::path dir = fresh_dir("args");
    auto help = run_cli({"--help"}, dir);
    CHECK(help.code == 0);
    CHECK(help.out.find("train-ref") != std::string::npos);
    CHECK(help.out.find("compress") != std::string::npos);
    CHECK(help.out.find("oracle") != std::string::npos);

    CHECK(run_cli({}, dir).code == 3);
    CHECK(run_cli({"compress", "--config", "x.ini", "--bogus-flag"}, dir).code == 3);
    CHECK(run_cli({"compress"}, dir).code == 3); // --config is required
}

TEST_CASE("train-ref fits a noiseless task and records its trail") {
    fs::path dir = fresh_dir("train_clean");
    std::string cfg = ls_config(dir, 3, "kind = binarize\n", "", "");
    // rewrite with zero noise
    write_text(dir / "run.ini",
               "[run]\nseed = 3\n[task]\nsynthetic = linear\nn = 40\nd = 5\nnoise = 0.0\n"
               "[scheme]\nkind = binarize\n");
    auto r = run_cli({"train-ref", "--config", cfg, "--out-dir", dir.string()}, dir);
    CHECK(r.code == 0);
    CHECK(summary_number(dir, "loss") < 1e-10);
    CHECK(summary_value(dir, "converged") == "1");

    WeightVector w = load_model((dir / "model.txt").string());
    CHECK(w.values.size() == 6);
    auto trail = load_metrics((dir / "train_metrics.txt").string());
    REQUIRE(!trail.empty());
    // the constraint column carries the gradient norm during training
    CHECK(trail.back().constraint_norm < trail.front().constraint_norm);
    CHECK(trail.back().constraint_norm <= 1e-8);
}

TEST_CASE("binarize on a sign teacher goes end to end cleanly") {
    fs::path dir = fresh_dir("sign_teacher");
    std::string csv = sign_teacher_csv(dir / "data.csv", 30, 5, 17);
    std::string cfg = write_text(dir / "run.ini", "[run]\nseed = 17\n[task]\ndata = " + csv +
                                                      "\n[scheme]\nkind = binarize\n");
    auto train = run_cli({"train-ref", "--config", cfg, "--out-dir", dir.string()}, dir);
    REQUIRE(train.code == 0);
    CHECK(summary_number(dir, "loss") < 1e-10);

    auto comp = run_cli({"compress", "--config", cfg, "--out-dir", dir.string()}, dir);
    CHECK(comp.code == 0);
    CHECK(comp.err.empty());
    CHECK(summary_value(dir, "converged") == "1");
    CHECK(summary_value(dir, "stuck_at_dc") == "0");

    WeightVector compressed = load_model((dir / "compressed_model.txt").string());
    for (std::size_t i = 0; i < compressed.values.size(); ++i)
        if (compressed.mask[i]) CHECK(std::fabs(compressed.values[i]) == 1.0);

    ThetaFile tf = load_theta((dir / "theta.txt").string());
    CHECK(tf.kind == SchemeKind::Binarize);

    // evaluate agrees with the compress summary
    auto ev = run_cli({"evaluate", "--config", cfg, "--out-dir", dir.string(), "--theta",
                       (dir / "theta.txt").string()},
                      dir);
    CHECK(ev.code == 0);
    double from_eval = summary_number(dir, "loss_compressed", "eval.txt");
    double from_comp = summary_number(dir, "loss_compressed");
    CHECK(from_eval == doctest::Approx(from_comp).epsilon(1e-12));
}

TEST_CASE("configuration problems exit with code 3") {
    fs::path dir = fresh_dir("cfg_errors");
    std::string cfg = ls_config(dir, 5, "kind = binarize\n");
    REQUIRE(run_cli({"train-ref", "--config", cfg, "--out-dir", dir.string()}, dir).code == 0);
    auto bad_a = run_cli({"compress", "--config", cfg, "--out-dir", dir.string(), "--a", "0.9"}, dir);
    CHECK(bad_a.code == 3);
    CHECK(bad_a.err.find("config error") != std::string::npos);

    CHECK(run_cli({"compress", "--config", cfg, "--out-dir", dir.string(), "--level", "0"}, dir)
              .code == 3);

    std::string tern = ls_config(fresh_dir("cfg_errors_t"), 5, "kind = ternary\n");
    auto noracle = run_cli({"oracle", "--config", tern, "--out-dir", dir.string()}, dir);
    CHECK(noracle.code == 3);
    CHECK(noracle.err.find("no oracle") != std::string::npos);

    auto retrain = run_cli({"baseline", "--kind", "retrain", "--config", cfg, "--out-dir",
                            dir.string()},
                           dir);
    CHECK(retrain.code == 3);
    CHECK(run_cli({"baseline", "--kind", "bogus", "--config", cfg, "--out-dir", dir.string()}, dir)
              .code == 3);
}

TEST_CASE("missing files exit with code 5") {
    fs::path dir = fresh_dir("io_errors");
    CHECK(run_cli({"train-ref", "--config", (dir / "absent.ini").string()}, dir).code == 5);

    std::string cfg = write_text(dir / "run.ini",
                                 "[task]\ndata = " + (dir / "absent.csv").string() +
                                     "\n[scheme]\nkind = binarize\n");
    CHECK(run_cli({"train-ref", "--config", cfg, "--out-dir", dir.string()}, dir).code == 5);

    // compress before train-ref: no reference model on disk
    std::string cfg2 = ls_config(dir, 5, "kind = binarize\n");
    CHECK(run_cli({"compress", "--config", cfg2, "--out-dir", (dir / "empty").string()}, dir)
              .code == 5);
}

TEST_CASE("the quant oracle refuses oversized instances") {
    fs::path dir = fresh_dir("oracle_limit");
    std::string cfg = write_text(dir / "run.ini",
                                 "[run]\nseed = 2\n[task]\nsynthetic = linear\nn = 30\nd = 20\n"
                                 "noise = 0.05\n[scheme]\nkind = adaptive-quant\nk = 2\n");
    REQUIRE(run_cli({"train-ref", "--config", cfg, "--out-dir", dir.string()}, dir).code == 0);
    auto r = run_cli({"oracle", "--config", cfg, "--out-dir", dir.string()}, dir);
    CHECK(r.code == 3);
    CHECK(r.err.find("size limit") != std::string::npos);
}

TEST_CASE("qp equals al with frozen multipliers, metric for metric") {
    fs::path base = fresh_dir("qp_vs_al");
    std::string qp_cfg = write_text(base / "qp.ini",
                                    "[run]\nseed = 2\n[task]\nsynthetic = linear\nn = 30\nd = 6\n"
                                    "noise = 0.05\n[scheme]\nkind = adaptive-quant\nk = 2\n"
                                    "[lc]\nmethod = qp\n");
    std::string al_cfg = write_text(base / "al.ini",
                                    "[run]\nseed = 2\n[task]\nsynthetic = linear\nn = 30\nd = 6\n"
                                    "noise = 0.05\n[scheme]\nkind = adaptive-quant\nk = 2\n"
                                    "[lc]\nmethod = al\nupdate-multipliers = false\n");
    fs::path qp_dir = fresh_dir("qp_vs_al/qp");
    fs::path al_dir = fresh_dir("qp_vs_al/al");
    REQUIRE(run_cli({"train-ref", "--config", qp_cfg, "--out-dir", qp_dir.string()}, base).code == 0);
    REQUIRE(run_cli({"compress", "--config", qp_cfg, "--out-dir", qp_dir.string()}, base).code <= 1);
    REQUIRE(run_cli({"compress", "--config", al_cfg, "--out-dir", al_dir.string(), "--model",
                     (qp_dir / "model.txt").string()},
                    base)
                .code <= 1);

    auto qp = load_metrics((qp_dir / "metrics.txt").string());
    auto al = load_metrics((al_dir / "metrics.txt").string());
    REQUIRE(qp.size() == al.size());
    for (std::size_t i = 0; i < qp.size(); ++i) {
        CHECK(qp[i].k == al[i].k);
        CHECK(qp[i].mu == al[i].mu);
        CHECK(qp[i].loss_w == al[i].loss_w);
        CHECK(qp[i].loss_compressed == al[i].loss_compressed);
        CHECK(qp[i].constraint_norm == al[i].constraint_norm);
        CHECK(qp[i].lambda_norm == 0.0);
        CHECK(al[i].lambda_norm == 0.0);
        CHECK(qp[i].lstep_iters_used == al[i].lstep_iters_used);
    }
}

TEST_CASE("identical seeds reproduce every artifact byte for byte") {
    auto run_once = [](const std::string& name) {
        fs::path dir = fresh_dir(name);
        std::string cfg = ls_config(dir, 9, "kind = adaptive-quant\nk = 2\n");
        REQUIRE(run_cli({"train-ref", "--config", cfg, "--out-dir", dir.string()}, dir).code == 0);
        REQUIRE(run_cli({"compress", "--config", cfg, "--out-dir", dir.string()}, dir).code <= 1);
        return dir;
    };
    fs::path a = run_once("repro_a");
    fs::path b = run_once("repro_b");
    CHECK(slurp(a / "model.txt") == slurp(b / "model.txt"));
    CHECK(slurp(a / "theta.txt") == slurp(b / "theta.txt"));
    CHECK(slurp(a / "compressed_model.txt") == slurp(b / "compressed_model.txt"));

    auto ma = load_metrics((a / "metrics.txt").string());
    auto mb = load_metrics((b / "metrics.txt").string());
    REQUIRE(ma.size() == mb.size());
    for (std::size_t i = 0; i < ma.size(); ++i) {
        CHECK(ma[i].k == mb[i].k);
        CHECK(ma[i].mu == mb[i].mu);
        CHECK(ma[i].loss_w == mb[i].loss_w);
        CHECK(ma[i].loss_compressed == mb[i].loss_compressed);
        CHECK(ma[i].constraint_norm == mb[i].constraint_norm);
        CHECK(ma[i].lambda_norm == mb[i].lambda_norm);
        CHECK(ma[i].lstep_iters_used == mb[i].lstep_iters_used);
        // wallclock_ms is the one field allowed to differ
    }
}

TEST_CASE("an aggressive penalty growth factor triggers the stall warning") {
    fs::path dir = fresh_dir("stall");
    std::string cfg = ls_config(dir, 17, "kind = binarize\n");
    REQUIRE(run_cli({"train-ref", "--config", cfg, "--out-dir", dir.string()}, dir).code == 0);
    auto r = run_cli({"compress", "--config", cfg, "--out-dir", dir.string(), "--a", "10"}, dir);
    CHECK((r.code == 1 || r.code == 2));
    if (r.code == 1) {
        CHECK(r.err.find("smaller a") != std::string::npos);
        CHECK(summary_value(dir, "stuck_at_dc") == "1");
    }
}

TEST_CASE("exact idc cycles and repeats its loss from round two onward") {
    fs::path dir = fresh_dir("idc_exact");
    std::string cfg = ls_config(dir, 21, "kind = adaptive-quant\nk = 2\n");
    REQUIRE(run_cli({"train-ref", "--config", cfg, "--out-dir", dir.string()}, dir).code == 0);
    auto r = run_cli({"baseline", "--kind", "idc", "--exact", "--rounds", "5", "--config", cfg,
                      "--out-dir", dir.string()},
                     dir);
    CHECK(r.code == 0);
    CHECK(summary_value(dir, "cycling") == "1");

    auto recs = load_metrics((dir / "metrics.txt").string());
    REQUIRE(recs.size() == 5);
    for (std::size_t i = 1; i < recs.size(); ++i) {
        CHECK(std::fabs(recs[i].loss_w - recs[0].loss_w) <= 1e-10);
        CHECK(recs[i].constraint_norm <= 1e-10); // theta drift between rounds
    }
}

TEST_CASE("the lc loop is never worse than direct compression") {
    fs::path dir = fresh_dir("lc_vs_dc");
    std::string cfg = ls_config(dir, 29, "kind = adaptive-quant\nk = 2\n");
    REQUIRE(run_cli({"train-ref", "--config", cfg, "--out-dir", dir.string()}, dir).code == 0);

    fs::path dc_dir = fresh_dir("lc_vs_dc/dc");
    auto dc = run_cli({"baseline", "--kind", "dc", "--config", cfg, "--out-dir", dc_dir.string(),
                       "--model", (dir / "model.txt").string()},
                      dir);
    REQUIRE(dc.code == 0);
    auto lc = run_cli({"compress", "--config", cfg, "--out-dir", dir.string()}, dir);
    REQUIRE(lc.code <= 1);
    CHECK(summary_number(dir, "loss_compressed") <=
          summary_number(dc_dir, "loss_compressed") + 1e-9);
}

TEST_CASE("retraining after pruning beats plain pruning") {
    fs::path dir = fresh_dir("retrain");
    std::string cfg = ls_config(dir, 33, "kind = prune-l0\nkappa = 2\n");
    REQUIRE(run_cli({"train-ref", "--config", cfg, "--out-dir", dir.string()}, dir).code == 0);

    fs::path dc_dir = fresh_dir("retrain/dc");
    REQUIRE(run_cli({"baseline", "--kind", "dc", "--config", cfg, "--out-dir", dc_dir.string(),
                     "--model", (dir / "model.txt").string()},
                    dir)
                .code == 0);
    fs::path rt_dir = fresh_dir("retrain/rt");
    auto rt = run_cli({"baseline", "--kind", "retrain", "--config", cfg, "--out-dir",
                       rt_dir.string(), "--model", (dir / "model.txt").string()},
                      dir);
    REQUIRE(rt.code == 0);
    CHECK(summary_value(rt_dir, "kappa") == "2");
    CHECK(summary_number(rt_dir, "loss_compressed") <=
          summary_number(dc_dir, "loss_compressed") + 1e-12);
}

TEST_CASE("report summarizes runs and computes oracle gaps") {
    fs::path dir = fresh_dir("report");
    std::string cfg = write_text(dir / "run.ini",
                                 "[run]\nseed = 13\n[task]\nsynthetic = linear\nn = 30\nd = 8\n"
                                 "noise = 0.05\n[scheme]\nkind = binarize\n");
    REQUIRE(run_cli({"train-ref", "--config", cfg, "--out-dir", dir.string()}, dir).code == 0);
    REQUIRE(run_cli({"compress", "--config", cfg, "--out-dir", dir.string()}, dir).code <= 1);
    REQUIRE(run_cli({"oracle", "--config", cfg, "--out-dir", dir.string()}, dir).code == 0);
    CHECK(slurp(dir / "oracle.txt").find("loss ") != std::string::npos);

    fs::path rep_dir = fresh_dir("report/out");
    auto rep = run_cli({"report", (dir / "metrics.txt").string(), "--out-dir", rep_dir.string(),
                        "--oracle", (dir / "oracle.txt").string()},
                       dir);
    CHECK(rep.code == 0);
    std::string table = slurp(rep_dir / "report.txt");
    CHECK(table.find("rel_gap") != std::string::npos);
    CHECK(table.find("oracle_loss") != std::string::npos);
    CHECK(rep.out.find("rel_gap") != std::string::npos);
    std::string plot = slurp(rep_dir / "plot_data.txt");
    CHECK(plot.find("# series") != std::string::npos);

    // an empty metrics file is an io error
    std::string empty = write_text(dir / "empty_metrics.txt", "");
    CHECK(run_cli({"report", empty, "--out-dir", rep_dir.string()}, dir).code == 5);
}

TEST_CASE("sweep crosses seeds with levels and reports per-run status") {
    fs::path dir = fresh_dir("sweep");
    std::string cfg = ls_config(dir, 4, "kind = prune-l0\nkappa = 1\n");
    auto r = run_cli({"sweep", "--config", cfg, "--out-dir", dir.string(), "--seeds", "4,5",
                      "--levels", "1,2"},
                     dir);
    CHECK(r.code == 0);
    for (const char* tag : {"s4_l1", "s4_l2", "s5_l1", "s5_l2"}) {
        CHECK(fs::exists(dir / tag / "compressed_model.txt"));
        CHECK(fs::exists(dir / tag / "metrics.txt"));
    }
    std::string sweep = slurp(dir / "sweep.txt");
    CHECK(sweep.find("# seed level status") != std::string::npos);
    int rows = 0;
    std::istringstream lines(sweep);
    std::string line;
    while (std::getline(lines, line))
        if (!line.empty() && line[0] != '#') ++rows;
    CHECK(rows == 4);
}

TEST_CASE("evaluate rejects a theta whose scheme disagrees with the config") {
    fs::path dir = fresh_dir("eval_mismatch");
    std::string cfg = ls_config(dir, 41, "kind = binarize\n");
    REQUIRE(run_cli({"train-ref", "--config", cfg, "--out-dir", dir.string()}, dir).code == 0);
    REQUIRE(run_cli({"compress", "--config", cfg, "--out-dir", dir.string()}, dir).code <= 1);

    std::string quant_cfg = ls_config(fresh_dir("eval_mismatch/q"), 41,
                                      "kind = adaptive-quant\nk = 2\n");
    auto r = run_cli({"evaluate", "--config", quant_cfg, "--out-dir", dir.string(), "--theta",
                      (dir / "theta.txt").string()},
                     dir);
    CHECK(r.code == 3);
    CHECK(r.err.find("scheme") != std::string::npos);
}
