#pragma once

#include <vector>

namespace lc {

// decaying rate alpha/(beta + t), optionally clipped at 1/clip_mu
struct LearnRateSchedule {
    double alpha = 0.1;
    double beta = 10.0;
    double clip_mu = 0.0; // 0 disables clipping

    double base_rate(long t) const { return alpha / (beta + static_cast<double>(t)); }
    double rate(long t) const {
        double r = base_rate(t);
        if (clip_mu > 0.0 && r > 1.0 / clip_mu) r = 1.0 / clip_mu;
        return r;
    }
};

// first t with alpha/(beta+t) <= 1/clip_mu, i.e. ceil(clip_mu*alpha - beta)
// clamped at 0; returns 0 when clipping is off
long clip_crossover(double alpha, double beta, double clip_mu);

struct ScheduleReport {
    bool robbins_monro = false; // the alpha/(beta+t) family always qualifies
    long crossover = 0;
    bool clipped_matches = false; // every emitted rate equals min(base, 1/clip_mu)
    bool rates_positive = false;
    std::vector<double> base;
    std::vector<double> clipped;
};

ScheduleReport validate_schedule(double alpha, double beta, double clip_mu, long horizon);

} // namespace lc
