#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lc/compress.hpp"
#include "lc/driver.hpp"
#include "lc/loss.hpp"

namespace lc {

struct TaskSpec {
    LossFamily family = LossFamily::LeastSquares;
    std::string data;      // csv path; empty when synthetic
    std::string target_column = "target";
    std::string synthetic; // linear | logistic | mlp-teacher | empty
    long n = 50;
    long d = 8;
    double noise = 0.1;
    std::size_t hidden = 4;  // mlp only
    std::size_t classes = 2; // mlp only
    double l2_reg = 0.0;
    bool compress_biases = false;
};

struct TrainSpec {
    long max_iters = 200000;
    double grad_tol = 1e-8;
    double alpha = 0.2;
    double beta = 20.0;
    int epochs = 300;
    int batch_size = 10;
};

struct RunConfig {
    TaskSpec task;
    CompressionScheme scheme;
    LCConfig lc;
    TrainSpec train;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
};

// strict key=value parser with [section] headers; unknown or duplicate keys
// and malformed values are fatal, with the line number in the message
RunConfig load_config(const std::string& path);

// derive per-component sub-seeds from config.seed (scheme, lc, training, data)
void seed_config(RunConfig& cfg);

struct Dataset {
    std::vector<double> X; // n x d row-major
    std::vector<double> y;
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<double> true_weights; // generating weights + bias, when known
};

// numeric csv with a header row; the target column is selected by name, or by
// 0-based index if the name is numeric
Dataset load_csv(const std::string& path, const std::string& target_column);

Dataset gen_synthetic(const std::string& kind, long n, long d, double noise, std::uint64_t seed,
                      std::size_t hidden = 4, std::size_t classes = 2);

// dataset (file or synthetic) + task spec -> loss task
LossTask build_task(const TaskSpec& spec, std::uint64_t data_seed);

// versioned text formats; doubles are written with 17 significant digits so
// binary64 round trips are bit-exact
void save_model(const std::string& path, const WeightVector& w);
WeightVector load_model(const std::string& path);

struct ThetaFile {
    SchemeKind kind = SchemeKind::Binarize;
    CompressedParams params;
};

void save_theta(const std::string& path, const CompressionScheme& scheme,
                const CompressedParams& theta);
ThetaFile load_theta(const std::string& path);

// one whitespace-separated record per line, fixed field order:
// k mu loss_w loss_compressed constraint_norm lambda_norm lstep_iters wallclock_ms
void append_metrics(const std::string& path, const MetricsRecord& rec);
std::vector<MetricsRecord> load_metrics(const std::string& path);

std::string format_g17(double v);

} // namespace lc
