#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "apsde/error.hpp"
#include "apsde/models.hpp"
#include "apsde/rng.hpp"
#include "apsde/types.hpp"

namespace apsde {

struct SchemeParams {
    double dt = 0.004;
    double eps = 1.0;
    double theta = 1.0;
    std::optional<double> theta2; ///< theta' of the mismatched exp scheme; defaults to theta
    int steps = 250;              ///< N, final time T = N dt

    double fast_theta() const { return theta2.value_or(theta); }
    double final_time() const { return steps * dt; }

    void validate() const {
        if (!(dt > 0.0 && dt <= 1.0)) {
            throw ParameterError("dt must lie in (0, 1], got " + std::to_string(dt));
        }
        if (!(eps > 0.0 && eps <= 1.0)) {
            throw ParameterError("eps must lie in (0, 1], got " + std::to_string(eps));
        }
        if (!(theta >= 0.5 && theta <= 1.0)) {
            throw ParameterError("theta must lie in [1/2, 1], got " + std::to_string(theta));
        }
        if (!(fast_theta() >= 0.5 && fast_theta() <= 1.0)) {
            throw ParameterError("theta2 must lie in [1/2, 1], got " + std::to_string(fast_theta()));
        }
        if (steps < 0) {
            throw ParameterError("step count must be >= 0");
        }
    }
};

/// One step's noise: gamma drives the fast variable, Gamma (length D) the slow one.
struct NoiseDraw {
    double gamma = 0.0;
    Vec Gamma;
};

/// Intermediate values of the predictor-corrector diffusion schemes.
struct DiffusionStages {
    double m_hat = 0.0; ///< predicted fast value (AP scheme only)
    Vec x_hat;          ///< predicted slow position
    Vec y;              ///< corrector evaluation point
};

// ---------------------------------------------------------------------------
// Averaging regime

/// Decay factor e^{-dt/eps} and spread sqrt(1 - e^{-2 dt/eps}) of the exact OU step.
struct OuCoefficients {
    double decay = 0.0;
    double spread = 0.0;

    explicit OuCoefficients(const SchemeParams& p)
        : decay(std::exp(-p.dt / p.eps)), spread(std::sqrt(-std::expm1(-2.0 * p.dt / p.eps))) {}
};

/// Exact-in-law OU update: e^{-dt/eps} m + sqrt(1 - e^{-2 dt/eps}) h(x) gamma.
inline double ou_exact_step(double m, const Vec& x, const OuCoefficients& c, double gamma,
                            const AveragingModel& model) {
    if (!std::isfinite(m) || !std::isfinite(gamma)) {
        throw InvalidStateError("ou_exact_step: non-finite input");
    }
    return c.decay * m + c.spread * model.fast_scale(x) * gamma;
}

inline double ou_exact_step(double m, const Vec& x, const SchemeParams& p, double gamma,
                            const AveragingModel& model) {
    return ou_exact_step(m, x, OuCoefficients(p), gamma, model);
}

/// AP scheme: b and sigma are evaluated at the updated fast value.
inline SystemState step_ap_averaging(const SystemState& s, const SchemeParams& p,
                                     const OuCoefficients& ou, const NoiseDraw& noise,
                                     const AveragingModel& model) {
    SystemState out;
    out.m = ou_exact_step(s.m, s.x, ou, noise.gamma, model);
    out.x = s.x + p.dt * model.drift(s.x, out.m);
    if (model.has_diffusion()) {
        out.x += std::sqrt(p.dt) * (model.diffusion(s.x, out.m) * noise.Gamma);
    }
    return out;
}

inline SystemState step_ap_averaging(const SystemState& s, const SchemeParams& p,
                                     const NoiseDraw& noise, const AveragingModel& model) {
    return step_ap_averaging(s, p, OuCoefficients(p), noise, model);
}

/// Implicit Euler on the fast variable: not asymptotic preserving.
inline SystemState step_crude_averaging(const SystemState& s, const SchemeParams& p,
                                        const NoiseDraw& noise, const AveragingModel& model) {
    const double ratio = p.dt / p.eps;
    SystemState out;
    out.m = (s.m + std::sqrt(2.0 * ratio) * model.fast_scale(s.x) * noise.gamma) / (1.0 + ratio);
    out.x = s.x + p.dt * model.drift(s.x, out.m);
    if (model.has_diffusion()) {
        out.x += std::sqrt(p.dt) * (model.diffusion(s.x, out.m) * noise.Gamma);
    }
    return out;
}

/// eps -> 0 limit of the AP scheme: the fast value is replaced by h(x) gamma.
inline Vec step_limit_averaging(const Vec& x, const SchemeParams& p, const NoiseDraw& noise,
                                const AveragingModel& model) {
    const double fast = model.fast_scale(x) * noise.gamma;
    Vec out = x + p.dt * model.drift(x, fast);
    if (model.has_diffusion()) {
        out += std::sqrt(p.dt) * (model.diffusion(x, fast) * noise.Gamma);
    }
    return out;
}

/// Euler(-Maruyama) on the averaged equation. The averaged noise uses Gamma(0).
inline Vec step_ref_averaging(const Vec& x, const SchemeParams& p, const NoiseDraw& noise,
                              const AveragingModel& model,
                              int quadrature_order = kDefaultQuadratureOrder) {
    Vec out = x + p.dt * averaged_drift(model, x, quadrature_order);
    if (model.has_diffusion()) {
        out(0) += std::sqrt(p.dt) * averaged_diffusion(model, x, quadrature_order) * noise.Gamma(0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Diffusion-approximation regime

namespace detail {

inline double checked_rate(const DiffusionModel& model, const Vec& x) {
    const double f = model.rate(x);
    if (!(f > 0.0)) {
        throw ModelViolationError("model '" + model.name + "': f(x) = " + std::to_string(f) +
                                  " is not positive");
    }
    return f;
}

} // namespace detail

/// Predictor-corrector theta scheme. Both implicit stages are linear in the
/// unknown fast value and solved in closed form.
inline SystemState step_ap_diffusion(const SystemState& s, const SchemeParams& p, double gamma,
                                     const DiffusionModel& model,
                                     DiffusionStages* stages = nullptr) {
    const double theta = p.theta;
    const double dt = p.dt;
    const double eps = p.eps;
    const double sqrt_dt = std::sqrt(dt);

    const double f = detail::checked_rate(model, s.x);
    const double g = model.forcing(s.x);
    const double h = model.noise(s.x);
    const Vec b = model.drift(s.x);
    const Vec sig = model.sigma(s.x);
    const double kick = f * h * sqrt_dt * gamma / eps;

    const double a_hat = dt * f / (eps * eps);
    const double m_hat = (s.m * (1.0 - (1.0 - theta) * a_hat) + dt * f * g / eps + kick) /
                         (1.0 + theta * a_hat);
    const double m_hat_theta = (1.0 - theta) * s.m + theta * m_hat;
    const Vec x_hat = s.x + dt * b + sig * (dt * m_hat_theta / eps);

    const double f_hat = detail::checked_rate(model, x_hat);
    const double a = dt * f_hat / (eps * eps);
    const double m_next = (s.m * (1.0 - (1.0 - theta) * a) + dt * f_hat * g / eps + kick) /
                          (1.0 + theta * a);
    const double m_theta = (1.0 - theta) * s.m + theta * m_next;
    const Vec y = s.x + dt * b + sig * (dt * m_theta / eps);

    SystemState out;
    out.m = m_next;
    out.x = s.x + dt * b + 0.5 * (sig + model.sigma(y)) * (dt / eps) * (0.5 * (m_hat_theta + m_theta));
    if (stages) {
        stages->m_hat = m_hat;
        stages->x_hat = x_hat;
        stages->y = y;
    }
    return out;
}

/// eps -> 0 limit of step_ap_diffusion.
inline Vec step_limit_diffusion(const Vec& x, const SchemeParams& p, double gamma,
                                const DiffusionModel& model, DiffusionStages* stages = nullptr) {
    const double sqrt_dt = std::sqrt(p.dt);
    const double f = detail::checked_rate(model, x);
    const double g = model.forcing(x);
    const double h = model.noise(x);
    const Vec b = model.drift(x);
    const Vec sig = model.sigma(x);

    const Vec x_hat = x + p.dt * (b + g * sig) + sig * (h * sqrt_dt * gamma);
    const double ratio = f / detail::checked_rate(model, x_hat);
    const Vec y = x + p.dt * (b + g * sig) + sig * (h * ratio * sqrt_dt * gamma);
    const Vec sig_mid = 0.5 * (sig + model.sigma(y));
    Vec out = x + p.dt * (b + g * sig_mid) + sig_mid * (0.5 * (1.0 + ratio) * h * sqrt_dt * gamma);
    if (stages) {
        stages->m_hat = 0.0;
        stages->x_hat = x_hat;
        stages->y = y;
    }
    return out;
}

/// Implicit Euler fast variable, explicit slow update: converges as eps -> 0 to
/// Euler–Maruyama without the Itô correction and noise-induced drift.
inline SystemState step_crude_diffusion(const SystemState& s, const SchemeParams& p, double gamma,
                                        const DiffusionModel& model) {
    const double dt = p.dt;
    const double eps = p.eps;
    const double f = detail::checked_rate(model, s.x);
    const double g = model.forcing(s.x);
    const double h = model.noise(s.x);
    const double a = f * dt / (eps * eps);
    SystemState out;
    out.m = (s.m + f * g * dt / eps + f * h * std::sqrt(dt) * gamma / eps) / (1.0 + a);
    out.x = s.x + dt * model.drift(s.x) + model.sigma(s.x) * (dt * out.m / eps);
    return out;
}

/// Exponential scheme for sigma(x) = x on the line. theta weights the slow
/// quadrature, theta2 the fast theta-method; asymptotic preserving iff they agree.
inline SystemState step_exp_ex1bis(const SystemState& s, const SchemeParams& p, double gamma) {
    const double dt = p.dt;
    const double eps = p.eps;
    const double theta = p.theta;
    const double theta_fast = p.fast_theta();
    const double a = dt / (eps * eps);
    SystemState out;
    out.m = (s.m * (1.0 - (1.0 - theta_fast) * a) + std::sqrt(dt) * gamma / eps) /
            (1.0 + theta_fast * a);
    out.x = s.x * std::exp((dt / eps) * ((1.0 - theta) * s.m + theta * out.m));
    return out;
}

/// Limit of the consistent exponential scheme: X exp(sqrt(dt) gamma).
inline Vec step_limit_ex1bis(const Vec& x, const SchemeParams& p, double gamma) {
    return x * std::exp(std::sqrt(p.dt) * gamma);
}

/// Euler–Maruyama on the limiting Itô SDE.
inline Vec step_ref_diffusion(const Vec& x, const SchemeParams& p, double gamma,
                              const DiffusionModel& model) {
    const Vec drift = limiting_diffusion_drift(model, x);
    return x + p.dt * drift + model.sigma(x) * (model.noise(x) * std::sqrt(p.dt) * gamma);
}

// ---------------------------------------------------------------------------
// Scheme identifiers and trajectory simulation

enum class SchemeId {
    ApAvg,
    CrudeAvg,
    LimitAvg,
    RefAvg,
    ApDiff,
    LimitDiff,
    CrudeDiff,
    ExpEx1bis,
    LimitEx1bis,
    RefDiff,
};

enum class ModelFamily { Averaging, Diffusion };

struct SchemeInfo {
    SchemeId id;
    std::string_view name;
    ModelFamily family;
    bool uses_fast_variable;
};

inline constexpr std::array<SchemeInfo, 10> kSchemes = {{
    {SchemeId::ApAvg, "ap-avg", ModelFamily::Averaging, true},
    {SchemeId::CrudeAvg, "crude-avg", ModelFamily::Averaging, true},
    {SchemeId::LimitAvg, "limit-avg", ModelFamily::Averaging, false},
    {SchemeId::RefAvg, "ref-avg", ModelFamily::Averaging, false},
    {SchemeId::ApDiff, "ap-diff", ModelFamily::Diffusion, true},
    {SchemeId::LimitDiff, "limit-diff", ModelFamily::Diffusion, false},
    {SchemeId::CrudeDiff, "crude-diff", ModelFamily::Diffusion, true},
    {SchemeId::ExpEx1bis, "exp-ex1bis", ModelFamily::Diffusion, true},
    {SchemeId::LimitEx1bis, "limit-ex1bis", ModelFamily::Diffusion, false},
    {SchemeId::RefDiff, "ref-diff", ModelFamily::Diffusion, false},
}};

inline const SchemeInfo& scheme_info(SchemeId id) {
    for (const auto& info : kSchemes) {
        if (info.id == id) {
            return info;
        }
    }
    throw ConfigError("unknown scheme id");
}

inline std::string_view to_string(SchemeId id) { return scheme_info(id).name; }

inline SchemeId parse_scheme(std::string_view name) {
    for (const auto& info : kSchemes) {
        if (info.name == name) {
            return info.id;
        }
    }
    throw ConfigError("unknown scheme '" + std::string(name) + "'");
}

/// A scheme bound to a model and parameters. Checks compatibility once, then
/// advances states drawing noise in the documented order.
class Integrator {
public:
    Integrator(SchemeId scheme, const AnyModel& model, const SchemeParams& params)
        : scheme_(scheme), model_(&model), params_(params), ou_(params),
          noise_dim_(model_noise_dim(model)) {
        params_.validate();
        if (const auto* avg = std::get_if<AveragingModel>(&model)) {
            // Gamma is still consumed (the counter advances) but never evaluated.
            uses_slow_noise_ = avg->has_diffusion();
        }
        const auto& info = scheme_info(scheme);
        const bool averaging = std::holds_alternative<AveragingModel>(model);
        if ((info.family == ModelFamily::Averaging) != averaging) {
            throw ConfigError("scheme '" + std::string(info.name) + "' is incompatible with model '" +
                              std::visit([](const auto& m) { return m.name; }, model) + "'");
        }
        if (scheme == SchemeId::ExpEx1bis || scheme == SchemeId::LimitEx1bis) {
            const auto& diff = std::get<DiffusionModel>(model);
            if (diff.domain != Domain::Line || diff.dim != 1) {
                throw ConfigError("scheme '" + std::string(info.name) +
                                  "' requires a one-dimensional model on the line");
            }
        }
        if (scheme == SchemeId::RefDiff) {
            const auto& diff = std::get<DiffusionModel>(model);
            if (!diff.derivatives) {
                throw CapabilityError("scheme 'ref-diff' needs the derivative bundle of model '" +
                                      diff.name + "'");
            }
        }
        if (scheme == SchemeId::RefAvg) {
            const auto& avg = std::get<AveragingModel>(model);
            if (avg.has_diffusion() && avg.dim != 1) {
                throw UnsupportedDimensionError("scheme 'ref-avg' with diffusion needs d = 1");
            }
        }
    }

    SchemeId scheme() const { return scheme_; }
    const SchemeParams& params() const { return params_; }
    int noise_dim() const { return noise_dim_; }
    bool uses_slow_noise() const { return uses_slow_noise_; }

    /// Draws (gamma, Gamma) from the stream and advances the state by one step.
    void step(SystemState& state, GaussianStream& stream) const {
        NoiseDraw noise;
        noise.gamma = stream.next_gaussian();
        if (uses_slow_noise_) {
            noise.Gamma = stream.next_gaussian_vec(noise_dim_);
        } else {
            stream.skip(static_cast<std::uint64_t>(noise_dim_));
        }
        step(state, noise);
    }

    void step(SystemState& state, const NoiseDraw& noise) const {
        switch (scheme_) {
        case SchemeId::ApAvg:
            state = step_ap_averaging(state, params_, ou_, noise, avg());
            break;
        case SchemeId::CrudeAvg:
            state = step_crude_averaging(state, params_, noise, avg());
            break;
        case SchemeId::LimitAvg:
            state.x = step_limit_averaging(state.x, params_, noise, avg());
            break;
        case SchemeId::RefAvg:
            state.x = step_ref_averaging(state.x, params_, noise, avg());
            break;
        case SchemeId::ApDiff:
            state = step_ap_diffusion(state, params_, noise.gamma, diff());
            break;
        case SchemeId::LimitDiff:
            state.x = step_limit_diffusion(state.x, params_, noise.gamma, diff());
            break;
        case SchemeId::CrudeDiff:
            state = step_crude_diffusion(state, params_, noise.gamma, diff());
            break;
        case SchemeId::ExpEx1bis:
            state = step_exp_ex1bis(state, params_, noise.gamma);
            break;
        case SchemeId::LimitEx1bis:
            state.x = step_limit_ex1bis(state.x, params_, noise.gamma);
            break;
        case SchemeId::RefDiff:
            state.x = step_ref_diffusion(state.x, params_, noise.gamma, diff());
            break;
        }
    }

    /// Runs all N steps from `initial` and returns the final state only.
    SystemState endpoint(SystemState initial, GaussianStream& stream) const {
        for (int n = 0; n < params_.steps; ++n) {
            step(initial, stream);
        }
        return initial;
    }

private:
    const AveragingModel& avg() const { return *std::get_if<AveragingModel>(model_); }
    const DiffusionModel& diff() const { return *std::get_if<DiffusionModel>(model_); }

    SchemeId scheme_;
    const AnyModel* model_;
    SchemeParams params_;
    OuCoefficients ou_;
    int noise_dim_;
    bool uses_slow_noise_ = false;
};

/// States at t_n = n dt, n = 0..N, starting from the registry initial condition.
/// Schemes without a fast variable carry m0 unchanged.
inline std::vector<SystemState> simulate_trajectory(SchemeId scheme, const ModelEntry& entry,
                                                    const SchemeParams& params,
                                                    GaussianStream& stream) {
    const Integrator integrator(scheme, entry.model, params);
    std::vector<SystemState> path;
    path.reserve(static_cast<std::size_t>(params.steps) + 1);
    SystemState state{entry.x0, entry.m0};
    path.push_back(state);
    for (int n = 0; n < params.steps; ++n) {
        integrator.step(state, stream);
        path.push_back(state);
    }
    return path;
}

} // namespace apsde
