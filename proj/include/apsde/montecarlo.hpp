#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iterator>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "apsde/error.hpp"
#include "apsde/models.hpp"
#include "apsde/parallel.hpp"
#include "apsde/rng.hpp"
#include "apsde/schemes.hpp"

namespace apsde {

struct Observable {
    std::string name;
    std::function<double(const Vec&)> eval;
};

inline Observable find_observable(std::string_view name) {
    constexpr double kTwoPi = 2.0 * std::numbers::pi;
    if (name == "identity") {
        return {"identity", [](const Vec& x) { return x(0); }};
    }
    if (name == "sin2pix") {
        return {"sin2pix", [](const Vec& x) { return std::sin(kTwoPi * x(0)); }};
    }
    if (name == "cos2pix") {
        return {"cos2pix", [](const Vec& x) { return std::cos(kTwoPi * x(0)); }};
    }
    throw ConfigError("unknown observable '" + std::string(name) + "'");
}

/// N such that N dt = T, or a ParameterError if T is not a multiple of dt.
inline int steps_for(double final_time, double dt) {
    if (!(dt > 0.0) || !(final_time >= 0.0)) {
        throw ParameterError("steps_for: need dt > 0 and T >= 0");
    }
    const double n = std::round(final_time / dt);
    if (std::fabs(final_time - n * dt) > 1e-12) {
        throw ParameterError("T = " + std::to_string(final_time) + " is not a multiple of dt = " +
                             std::to_string(dt));
    }
    return static_cast<int>(n);
}

/// Mean and sum of squared deviations; merged with Chan's formula.
struct RunningStats {
    std::int64_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double v) {
        ++count;
        const double delta = v - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta * (v - mean);
    }

    void merge(const RunningStats& other) {
        if (other.count == 0) {
            return;
        }
        if (count == 0) {
            *this = other;
            return;
        }
        const auto n = static_cast<double>(count + other.count);
        const double delta = other.mean - mean;
        mean += delta * static_cast<double>(other.count) / n;
        m2 += other.m2 + delta * delta * static_cast<double>(count) * static_cast<double>(other.count) / n;
        count += other.count;
    }

    double variance() const { return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0; }
    double std_error() const {
        return count > 1 ? std::sqrt(variance() / static_cast<double>(count)) : 0.0;
    }
};

inline constexpr std::int64_t kTrajectoryChunk = 1024;
inline constexpr double kMaxNonFiniteFraction = 1e-3;

/// Statistics of f(id) over ids 0..count-1; results are reduced chunk by chunk
/// in ascending id order, so they do not depend on the worker count.
/// Non-finite values are excluded and counted.
template <class PerTrajectory>
RunningStats reduce_trajectories(std::int64_t count, int workers, PerTrajectory&& f,
                                 std::int64_t* non_finite = nullptr) {
    const std::int64_t chunks = (count + kTrajectoryChunk - 1) / kTrajectoryChunk;
    std::vector<RunningStats> partial(static_cast<std::size_t>(chunks));
    std::vector<std::int64_t> bad(static_cast<std::size_t>(chunks), 0);
    parallel_for_chunks(chunks, resolve_worker_count(workers), [&](std::int64_t c) {
        const std::int64_t begin = c * kTrajectoryChunk;
        const std::int64_t end = std::min(count, begin + kTrajectoryChunk);
        RunningStats local;
        for (std::int64_t id = begin; id < end; ++id) {
            const double v = f(static_cast<std::uint64_t>(id));
            if (std::isfinite(v)) {
                local.add(v);
            } else {
                ++bad[static_cast<std::size_t>(c)];
            }
        }
        partial[static_cast<std::size_t>(c)] = local;
    });
    RunningStats total;
    std::int64_t total_bad = 0;
    for (std::size_t c = 0; c < partial.size(); ++c) {
        total.merge(partial[c]);
        total_bad += bad[c];
    }
    if (non_finite) {
        *non_finite = total_bad;
    }
    return total;
}

namespace detail {

inline void check_non_finite(std::int64_t bad, std::int64_t samples, const char* where) {
    if (static_cast<double>(bad) > kMaxNonFiniteFraction * static_cast<double>(samples)) {
        throw NumericalFailureError(std::string(where) + ": " + std::to_string(bad) + " of " +
                                    std::to_string(samples) + " trajectories are non-finite");
    }
}

} // namespace detail

struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::int64_t samples = 0;
    std::int64_t non_finite = 0;
};

/// Monte Carlo estimate of E phi(X_N) over trajectories 0..M-1.
inline Estimate estimate_expectation(SchemeId scheme, const ModelEntry& entry,
                                     const Observable& observable, const SchemeParams& params,
                                     std::int64_t samples, std::uint64_t seed, int workers = 0) {
    if (samples < 2) {
        throw ParameterError("estimate_expectation: need at least 2 samples");
    }
    const Integrator integrator(scheme, entry.model, params);
    const SystemState initial{entry.x0, entry.m0};
    std::int64_t bad = 0;
    const RunningStats stats = reduce_trajectories(
        samples, workers,
        [&](std::uint64_t id) {
            GaussianStream stream(seed, id);
            const SystemState end = integrator.endpoint(initial, stream);
            if (!end.x.allFinite()) {
                return std::numeric_limits<double>::quiet_NaN();
            }
            return observable.eval(end.x);
        },
        &bad);
    detail::check_non_finite(bad, samples, "estimate_expectation");
    return {stats.mean, stats.std_error(), stats.count, bad};
}

// ---------------------------------------------------------------------------
// Weak-error tables

/// Statistics of several per-trajectory quantities at once; same chunked,
/// ordered reduction as reduce_trajectories. A trajectory with a non-finite
/// value in any column is dropped from every column and counted.
template <class PerTrajectory>
std::vector<RunningStats> reduce_trajectories_multi(std::int64_t count, int workers,
                                                    std::size_t width, PerTrajectory&& f,
                                                    std::int64_t* non_finite = nullptr) {
    const std::int64_t chunks = (count + kTrajectoryChunk - 1) / kTrajectoryChunk;
    std::vector<std::vector<RunningStats>> partial(static_cast<std::size_t>(chunks),
                                                   std::vector<RunningStats>(width));
    std::vector<std::int64_t> bad(static_cast<std::size_t>(chunks), 0);
    parallel_for_chunks(chunks, resolve_worker_count(workers), [&](std::int64_t c) {
        const std::int64_t begin = c * kTrajectoryChunk;
        const std::int64_t end = std::min(count, begin + kTrajectoryChunk);
        auto& local = partial[static_cast<std::size_t>(c)];
        std::vector<double> values(width);
        for (std::int64_t id = begin; id < end; ++id) {
            f(static_cast<std::uint64_t>(id), values);
            if (!std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); })) {
                ++bad[static_cast<std::size_t>(c)];
                continue;
            }
            for (std::size_t k = 0; k < width; ++k) {
                local[k].add(values[k]);
            }
        }
    });
    std::vector<RunningStats> total(width);
    std::int64_t total_bad = 0;
    for (std::size_t c = 0; c < partial.size(); ++c) {
        for (std::size_t k = 0; k < width; ++k) {
            total[k].merge(partial[c][k]);
        }
        total_bad += bad[c];
    }
    if (non_finite) {
        *non_finite = total_bad;
    }
    return total;
}

/// Noise of one coarse step of size r * dt built from r consecutive fine draws.
/// Gamma is the normalized Brownian sum. gamma is sum_j a^(r-1-j) gamma_j,
/// normalized; with a = exp(-dt/eps) the coarse exact OU update reproduces the
/// fine OU path at coarse times, with a = 1 it is the Brownian sum. Either way
/// the coarse draws are i.i.d. standard normal.
class CoarseNoise {
public:
    CoarseNoise(int ratio, double fine_decay, double scale, int noise_dim)
        : ratio_(ratio), decay_(fine_decay), scale_(scale),
          gamma_scale_(1.0 / std::sqrt(static_cast<double>(ratio))) {
        acc_.Gamma = Vec::Zero(noise_dim);
    }

    /// Brownian coupling.
    static CoarseNoise brownian(int ratio, int noise_dim) {
        return CoarseNoise(ratio, 1.0, 1.0 / std::sqrt(static_cast<double>(ratio)), noise_dim);
    }

    /// Coupling through the exact OU transition of the fast variable.
    static CoarseNoise ornstein_uhlenbeck(int ratio, double fine_dt, double eps, int noise_dim) {
        const double fine_spread = std::sqrt(-std::expm1(-2.0 * fine_dt / eps));
        const double coarse_spread = std::sqrt(-std::expm1(-2.0 * ratio * fine_dt / eps));
        return CoarseNoise(ratio, std::exp(-fine_dt / eps), fine_spread / coarse_spread, noise_dim);
    }

    /// Adds one fine draw; true once r draws have been absorbed.
    bool add(const NoiseDraw& fine) {
        acc_.gamma = decay_ * acc_.gamma + fine.gamma;
        if (fine.Gamma.size() == acc_.Gamma.size()) {
            acc_.Gamma += fine.Gamma;
        }
        return ++filled_ == ratio_;
    }

    /// The completed coarse draw; resets the accumulator.
    NoiseDraw take() {
        NoiseDraw out;
        out.gamma = scale_ * acc_.gamma;
        out.Gamma = gamma_scale_ * acc_.Gamma;
        acc_.gamma = 0.0;
        acc_.Gamma.setZero();
        filled_ = 0;
        return out;
    }

private:
    int ratio_;
    double decay_;
    double scale_;
    double gamma_scale_;
    int filled_ = 0;
    NoiseDraw acc_;
};

/// Reference for weak_error_table. Without a scheme the table is
/// self-referenced (same scheme, same eps); without a dt the reference step is
/// min(dt_grid) / 16.
struct ReferenceSpec {
    std::optional<SchemeId> scheme;
    std::optional<double> dt;
};

inline constexpr double kDefaultReferenceRefinement = 16.0;

struct WeakErrorRow {
    double dt = 0.0;
    double eps = 0.0;
    SchemeId scheme = SchemeId::ApAvg;
    SchemeId reference_scheme = SchemeId::ApAvg;
    double reference_dt = 0.0;
    double estimate = 0.0;
    double std_error = 0.0;
    double reference_estimate = 0.0;
    double reference_std_error = 0.0;
    double error = 0.0;
    double error_std = 0.0;
    std::int64_t samples = 0;
    bool paired = false; ///< error_std is the standard error of paired differences

    /// Cells whose error is within 3 sigma of zero are dominated by Monte Carlo noise.
    bool resolved() const { return error > 3.0 * error_std; }
};

using WeakErrorTable = std::vector<WeakErrorRow>;

struct WeakErrorConfig {
    double final_time = 1.0;
    double theta = 1.0;
    std::optional<double> theta2;
    std::int64_t samples = 100000;
    std::uint64_t seed = 0;
    int workers = 0;
};

inline constexpr std::int64_t kMinTableSamples = 100;

namespace detail {

/// r with dt = r * fine_dt, or 0 when dt is not an integer multiple.
inline int refinement_ratio(double dt, double fine_dt) {
    const double r = std::round(dt / fine_dt);
    if (r < 1.0 || std::fabs(dt - r * fine_dt) > 1e-12 * dt) {
        return 0;
    }
    return static_cast<int>(r);
}

} // namespace detail

/// |E phi(scheme) - E phi(reference)| per (dt, eps). All cells share the seed.
///
/// When every dt is an integer multiple of the reference step, each reference
/// trajectory drives all coarse schemes through CoarseNoise, and the error and
/// its standard error come from paired differences. Otherwise cells are
/// estimated independently and the standard errors combine in quadrature.
inline WeakErrorTable weak_error_table(SchemeId scheme, const ReferenceSpec& reference,
                                       const ModelEntry& entry, const Observable& observable,
                                       const std::vector<double>& dt_grid,
                                       const std::vector<double>& eps_grid,
                                       const WeakErrorConfig& config) {
    if (dt_grid.empty()) {
        throw ConfigError("weak_error_table: dt grid is empty");
    }
    if (eps_grid.empty()) {
        throw ConfigError("weak_error_table: eps grid is empty");
    }
    if (config.samples < kMinTableSamples) {
        throw ParameterError("weak_error_table: need at least 100 samples per cell");
    }
    const SchemeId ref_scheme = reference.scheme.value_or(scheme);
    const double ref_dt =
        reference.dt.value_or(*std::min_element(dt_grid.begin(), dt_grid.end()) /
                              kDefaultReferenceRefinement);

    auto params_for = [&](double dt, double eps) {
        SchemeParams p;
        p.dt = dt;
        p.eps = eps;
        p.theta = config.theta;
        p.theta2 = config.theta2;
        p.steps = steps_for(config.final_time, dt);
        return p;
    };

    std::vector<int> ratios;
    for (double dt : dt_grid) {
        ratios.push_back(detail::refinement_ratio(dt, ref_dt));
    }
    const bool paired = std::all_of(ratios.begin(), ratios.end(), [](int r) { return r > 0; });

    auto make_row = [&](double dt, double eps) {
        WeakErrorRow row;
        row.dt = dt;
        row.eps = eps;
        row.scheme = scheme;
        row.reference_scheme = ref_scheme;
        row.reference_dt = ref_dt;
        row.paired = paired;
        return row;
    };

    WeakErrorTable table;
    if (!paired) {
        const bool ref_depends_on_eps = scheme_info(ref_scheme).uses_fast_variable;
        std::optional<Estimate> shared_ref;
        for (double eps : eps_grid) {
            Estimate ref;
            if (!ref_depends_on_eps && shared_ref) {
                ref = *shared_ref;
            } else {
                ref = estimate_expectation(ref_scheme, entry, observable, params_for(ref_dt, eps),
                                           config.samples, config.seed, config.workers);
                shared_ref = ref;
            }
            for (double dt : dt_grid) {
                const Estimate est = estimate_expectation(scheme, entry, observable,
                                                          params_for(dt, eps), config.samples,
                                                          config.seed, config.workers);
                WeakErrorRow row = make_row(dt, eps);
                row.estimate = est.mean;
                row.std_error = est.std_error;
                row.reference_estimate = ref.mean;
                row.reference_std_error = ref.std_error;
                row.error = std::fabs(est.mean - ref.mean);
                row.error_std = std::hypot(est.std_error, ref.std_error);
                row.samples = est.samples;
                table.push_back(row);
            }
        }
        return table;
    }

    const SystemState initial{entry.x0, entry.m0};
    const int noise_dim = model_noise_dim(entry.model);
    const std::size_t cells = dt_grid.size();
    for (double eps : eps_grid) {
        const Integrator fine(ref_scheme, entry.model, params_for(ref_dt, eps));
        std::vector<Integrator> coarse;
        coarse.reserve(cells);
        for (double dt : dt_grid) {
            coarse.emplace_back(scheme, entry.model, params_for(dt, eps));
        }
        const bool ou_coupling = ref_scheme == SchemeId::ApAvg;
        const bool slow_noise = fine.uses_slow_noise();

        // Column 0: reference; columns 1 + 2i and 2 + 2i: cell i and its difference.
        std::int64_t bad = 0;
        const auto stats = reduce_trajectories_multi(
            config.samples, config.workers, 1 + 2 * cells,
            [&](std::uint64_t id, std::vector<double>& out) {
                GaussianStream stream(config.seed, id);
                SystemState ref_state = initial;
                std::vector<SystemState> states(cells, initial);
                std::vector<CoarseNoise> noise;
                noise.reserve(cells);
                for (std::size_t i = 0; i < cells; ++i) {
                    noise.push_back(ou_coupling ? CoarseNoise::ornstein_uhlenbeck(ratios[i], ref_dt,
                                                                                  eps, noise_dim)
                                                : CoarseNoise::brownian(ratios[i], noise_dim));
                }
                NoiseDraw draw;
                for (int n = 0; n < fine.params().steps; ++n) {
                    draw.gamma = stream.next_gaussian();
                    if (slow_noise) {
                        draw.Gamma = stream.next_gaussian_vec(noise_dim);
                    } else {
                        stream.skip(static_cast<std::uint64_t>(noise_dim));
                    }
                    fine.step(ref_state, draw);
                    for (std::size_t i = 0; i < cells; ++i) {
                        if (noise[i].add(draw)) {
                            coarse[i].step(states[i], noise[i].take());
                        }
                    }
                }
                const double ref_value = ref_state.x.allFinite()
                                             ? observable.eval(ref_state.x)
                                             : std::numeric_limits<double>::quiet_NaN();
                out[0] = ref_value;
                for (std::size_t i = 0; i < cells; ++i) {
                    const double v = states[i].x.allFinite()
                                         ? observable.eval(states[i].x)
                                         : std::numeric_limits<double>::quiet_NaN();
                    out[1 + 2 * i] = v;
                    out[2 + 2 * i] = v - ref_value;
                }
            },
            &bad);
        detail::check_non_finite(bad, config.samples, "weak_error_table");
        for (std::size_t i = 0; i < cells; ++i) {
            WeakErrorRow row = make_row(dt_grid[i], eps);
            row.estimate = stats[1 + 2 * i].mean;
            row.std_error = stats[1 + 2 * i].std_error();
            row.reference_estimate = stats[0].mean;
            row.reference_std_error = stats[0].std_error();
            row.error = std::fabs(stats[2 + 2 * i].mean);
            row.error_std = stats[2 + 2 * i].std_error();
            row.samples = stats[0].count;
            table.push_back(row);
        }
    }
    return table;
}

/// For each dt, the row with the largest resolved error over eps. Rows whose
/// error is within 3 sigma never enter the supremum.
inline WeakErrorTable sup_over_eps(const WeakErrorTable& table) {
    WeakErrorTable out;
    for (const auto& row : table) {
        if (!row.resolved()) {
            continue;
        }
        auto it = std::find_if(out.begin(), out.end(), [&](const WeakErrorRow& r) { return r.dt == row.dt; });
        if (it == out.end()) {
            out.push_back(row);
        } else if (row.error > it->error) {
            *it = row;
        }
    }
    return out;
}

inline WeakErrorTable rows_at_eps(const WeakErrorTable& table, double eps) {
    WeakErrorTable out;
    std::copy_if(table.begin(), table.end(), std::back_inserter(out),
                 [&](const WeakErrorRow& r) { return r.eps == eps; });
    return out;
}

// ---------------------------------------------------------------------------
// Order fitting

enum class Axis { Dt, Eps };

struct OrderFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    int used = 0;
    int excluded = 0;
};

/// Ordinary least squares of log2(error) on log2(abscissa). Rows whose error
/// is not above 3 error_std are excluded and counted.
inline OrderFit fit_order(const WeakErrorTable& table, Axis axis = Axis::Dt) {
    std::vector<double> xs;
    std::vector<double> ys;
    OrderFit fit;
    for (const auto& row : table) {
        if (!row.resolved() || !(row.error > 0.0)) {
            ++fit.excluded;
            continue;
        }
        xs.push_back(std::log2(axis == Axis::Dt ? row.dt : row.eps));
        ys.push_back(std::log2(row.error));
    }
    fit.used = static_cast<int>(xs.size());
    if (fit.used < 3) {
        throw InsufficientDataError("fit_order: " + std::to_string(fit.used) +
                                    " usable rows, need at least 3");
    }
    const double n = static_cast<double>(xs.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0) {
        throw InsufficientDataError("fit_order: all abscissae coincide");
    }
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return fit;
}

// ---------------------------------------------------------------------------
// Coupled eps -> 0 gaps

struct GapPoint {
    double eps = 0.0;
    double gap = 0.0;     ///< mean |X_N^eps - X_N| over trajectories
    double gap_std = 0.0; ///< standard error of that mean
};

/// Pathwise endpoint gap between `scheme` at each eps and `limiting` driven by
/// the same draws. `params.eps` is ignored; `params.dt`, `theta` and `steps` are used.
inline std::vector<GapPoint> coupled_limit_gap(SchemeId scheme, SchemeId limiting,
                                               const ModelEntry& entry, const SchemeParams& params,
                                               const std::vector<double>& eps_list,
                                               std::int64_t samples, std::uint64_t seed,
                                               int workers = 0) {
    if (samples < 1) {
        throw ParameterError("coupled_limit_gap: need at least 1 sample");
    }
    std::vector<GapPoint> out;
    const SystemState initial{entry.x0, entry.m0};
    for (double eps : eps_list) {
        SchemeParams p = params;
        p.eps = eps;
        const Integrator fine(scheme, entry.model, p);
        const Integrator limit(limiting, entry.model, p);
        const RunningStats stats = reduce_trajectories(samples, workers, [&](std::uint64_t id) {
            GaussianStream a(seed, id);
            GaussianStream b(seed, id);
            const Vec xa = fine.endpoint(initial, a).x;
            const Vec xb = limit.endpoint(initial, b).x;
            return (xa - xb).norm();
        });
        out.push_back({eps, stats.mean, stats.std_error()});
    }
    return out;
}

/// max_n |X_n^a - X_n^b| for two schemes on trajectory `id`, common draws.
inline double trajectory_gap(SchemeId a, SchemeId b, const ModelEntry& entry,
                             const SchemeParams& params, std::uint64_t seed, std::uint64_t id) {
    GaussianStream sa(seed, id);
    GaussianStream sb(seed, id);
    const auto pa = simulate_trajectory(a, entry, params, sa);
    const auto pb = simulate_trajectory(b, entry, params, sb);
    double gap = 0.0;
    for (std::size_t n = 0; n < pa.size(); ++n) {
        gap = std::max(gap, (pa[n].x - pb[n].x).norm());
    }
    return gap;
}

} // namespace apsde
