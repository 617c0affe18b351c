#include "lc/schedule.hpp"

#include <cmath>

#include "lc/errors.hpp"

namespace lc {

long clip_crossover(double alpha, double beta, double clip_mu) {
    if (clip_mu <= 0.0) return 0;
    double t = std::ceil(clip_mu * alpha - beta);
    return t > 0.0 ? static_cast<long>(t) : 0;
}

ScheduleReport validate_schedule(double alpha, double beta, double clip_mu, long horizon) {
    if (alpha <= 0.0) throw ConfigError("schedule: alpha must be positive");
    if (beta <= 0.0) throw ConfigError("schedule: beta must be positive");
    if (clip_mu < 0.0) throw ConfigError("schedule: clip_mu must be nonnegative");
    if (horizon < 1) throw ConfigError("schedule: horizon must be >= 1");

    LearnRateSchedule sched{alpha, beta, clip_mu};
    ScheduleReport rep;
    // alpha/(beta+t) is not summable but is square-summable, and clipping at a
    // constant keeps both properties
    rep.robbins_monro = true;
    rep.crossover = clip_crossover(alpha, beta, clip_mu);
    rep.base.resize(horizon);
    rep.clipped.resize(horizon);
    rep.rates_positive = true;
    rep.clipped_matches = true;
    for (long t = 0; t < horizon; ++t) {
        rep.base[t] = sched.base_rate(t);
        rep.clipped[t] = sched.rate(t);
        if (!(rep.clipped[t] > 0.0)) rep.rates_positive = false;
        double want = clip_mu > 0.0 ? std::min(rep.base[t], 1.0 / clip_mu) : rep.base[t];
        if (rep.clipped[t] != want) rep.clipped_matches = false;
        if (t >= rep.crossover && rep.clipped[t] != rep.base[t]) rep.clipped_matches = false;
    }
    return rep;
}

} // namespace lc
