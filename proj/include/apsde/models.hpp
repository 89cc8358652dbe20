#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "apsde/error.hpp"
#include "apsde/quadrature.hpp"
#include "apsde/torus.hpp"
#include "apsde/types.hpp"

namespace apsde {

/// Averaging regime:
///   dX = b(X, m) dt + sigma(X, m) dB,   dm = -m/eps dt + sqrt(2) h(X)/sqrt(eps) dbeta.
/// The fast invariant law at frozen x is N(0, h(x)^2).
struct AveragingModel {
    std::string name;
    int dim = 1;       ///< d
    int noise_dim = 1; ///< D, dimension of B
    Domain domain = Domain::Torus;
    std::function<Vec(const Vec&, double)> drift;       ///< b(x, m), length d
    std::function<Mat(const Vec&, double)> diffusion;   ///< sigma(x, m), d x D; empty means zero
    std::function<double(const Vec&)> fast_scale;       ///< h(x)

    bool has_diffusion() const { return static_cast<bool>(diffusion); }
};

/// Analytic derivatives of a diffusion-regime model. The first two members are
/// required by the limiting drift; the second derivatives (d = 1 only) are
/// needed by the perturbed test function.
struct DiffusionDerivatives {
    std::function<Mat(const Vec&)> sigma_jacobian; ///< J(i, j) = d sigma_i / d x_j
    std::function<Vec(const Vec&)> rate_gradient;  ///< grad f
    std::function<double(const Vec&)> sigma_second; ///< sigma'' (d = 1)
    std::function<double(const Vec&)> rate_second;  ///< f'' (d = 1)
};

/// Diffusion-approximation regime:
///   dX = b(X) dt + sigma(X) m / eps dt,
///   dm = f(X) (-m/eps^2 dt + g(X)/eps dt + h(X)/eps dbeta).
struct DiffusionModel {
    std::string name;
    int dim = 1;
    Domain domain = Domain::Torus;
    std::function<Vec(const Vec&)> drift;     ///< b(x)
    std::function<Vec(const Vec&)> sigma;     ///< sigma(x), length d
    std::function<double(const Vec&)> rate;   ///< f(x) > 0
    std::function<double(const Vec&)> forcing; ///< g(x)
    std::function<double(const Vec&)> noise;  ///< h(x)
    std::optional<DiffusionDerivatives> derivatives;
};

using AnyModel = std::variant<AveragingModel, DiffusionModel>;

struct ModelEntry {
    std::string name;
    AnyModel model;
    Vec x0;
    double m0 = 0.0;
};

// ---------------------------------------------------------------------------
// Averaged and limiting coefficients

inline constexpr int kDefaultQuadratureOrder = 32;

/// bbar(x) = E b(x, h(x) U), U ~ N(0, 1), by n-point Gauss–Hermite.
inline Vec averaged_drift(const AveragingModel& model, const Vec& x,
                          int quadrature_order = kDefaultQuadratureOrder) {
    const auto& rule = gauss_hermite(quadrature_order);
    const double h = model.fast_scale(x);
    if (!(h >= 0.0)) {
        throw ParameterError("averaged_drift: h(x) must be >= 0");
    }
    Vec acc = Vec::Zero(model.dim);
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        acc += rule.weights[i] * model.drift(x, h * rule.nodes[i]);
    }
    return acc;
}

/// abar(x) = E sigma sigma^T (x, h(x) U), d x d.
inline Mat averaged_diffusion_matrix(const AveragingModel& model, const Vec& x,
                                     int quadrature_order = kDefaultQuadratureOrder) {
    Mat acc = Mat::Zero(model.dim, model.dim);
    if (!model.has_diffusion()) {
        return acc;
    }
    const auto& rule = gauss_hermite(quadrature_order);
    const double h = model.fast_scale(x);
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const Mat s = model.diffusion(x, h * rule.nodes[i]);
        acc += rule.weights[i] * (s * s.transpose());
    }
    return acc;
}

/// sigmabar(x) = sqrt(abar(x)); only the scalar case d = 1 is realized.
inline double averaged_diffusion(const AveragingModel& model, const Vec& x,
                                 int quadrature_order = kDefaultQuadratureOrder) {
    if (model.dim != 1) {
        throw UnsupportedDimensionError(
            "averaged_diffusion: square root of abar only realized for d = 1");
    }
    return std::sqrt(averaged_diffusion_matrix(model, x, quadrature_order)(0, 0));
}

/// Drift of the limiting Itô SDE in the diffusion regime:
///   b + g sigma + h^2/2 (sigma . grad) sigma - h^2/(2f) <sigma, grad f> sigma.
inline Vec limiting_diffusion_drift(const DiffusionModel& model, const Vec& x) {
    if (!model.derivatives || !model.derivatives->sigma_jacobian ||
        !model.derivatives->rate_gradient) {
        throw CapabilityError("limiting_diffusion_drift: model '" + model.name +
                              "' has no derivative bundle");
    }
    const double f = model.rate(x);
    if (!(f > 0.0)) {
        throw ModelViolationError("limiting_diffusion_drift: f(x) <= 0");
    }
    const double g = model.forcing(x);
    const double h = model.noise(x);
    const Vec s = model.sigma(x);
    const Mat jac = model.derivatives->sigma_jacobian(x);
    const Vec grad_f = model.derivatives->rate_gradient(x);
    const double h2 = h * h;
    Vec out = model.drift(x) + g * s;
    out += 0.5 * h2 * (jac * s);
    out -= (h2 / (2.0 * f)) * s.dot(grad_f) * s;
    return out;
}

/// Checks min f > 0 over a 1024-point sample of the domain.
inline void validate(const DiffusionModel& model) {
    constexpr int kPoints = 1024;
    // Kronecker lattice: frac(k * sqrt(p_i)) for d > 1, a uniform grid for d = 1.
    constexpr double kIrrational[kMaxDim] = {0.0, 1.4142135623730951, 1.7320508075688772,
                                             2.23606797749979, 2.6457513110645907,
                                             3.3166247903554, 3.605551275463989,
                                             4.123105625617661};
    for (int k = 0; k < kPoints; ++k) {
        Vec x(model.dim);
        for (int i = 0; i < model.dim; ++i) {
            double u = i == 0 ? static_cast<double>(k) / kPoints
                              : k * kIrrational[i] - std::floor(k * kIrrational[i]);
            // The line is sampled on [-8, 8).
            x(i) = model.domain == Domain::Torus ? u : 16.0 * u - 8.0;
        }
        if (!(model.rate(x) > 0.0)) {
            throw ModelViolationError("model '" + model.name + "': f must be > 0, got " +
                                      std::to_string(model.rate(x)));
        }
    }
}

// ---------------------------------------------------------------------------
// Registry

namespace models {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline AveragingModel avg_ex() {
    AveragingModel m;
    m.name = "avg-ex";
    m.drift = [](const Vec& x, double fast) {
        return scalar_vec(std::cos(kTwoPi * x(0)) * std::exp(-0.5 * fast * fast));
    };
    m.fast_scale = [](const Vec&) { return 1.0; };
    return m;
}

/// dX = sigma(X) m/eps dt with f = h = 1, g = 0, b = 0.
inline DiffusionModel diff_ex1_with(std::string name, Domain domain,
                                    std::function<double(double)> s,
                                    std::function<double(double)> ds,
                                    std::function<double(double)> dds) {
    DiffusionModel m;
    m.name = std::move(name);
    m.domain = domain;
    m.drift = [](const Vec&) { return scalar_vec(0.0); };
    m.sigma = [s](const Vec& x) { return scalar_vec(s(x(0))); };
    m.rate = [](const Vec&) { return 1.0; };
    m.forcing = [](const Vec&) { return 0.0; };
    m.noise = [](const Vec&) { return 1.0; };
    DiffusionDerivatives d;
    d.sigma_jacobian = [ds](const Vec& x) {
        Mat j(1, 1);
        j(0, 0) = ds(x(0));
        return j;
    };
    d.rate_gradient = [](const Vec&) { return scalar_vec(0.0); };
    d.sigma_second = [dds](const Vec& x) { return dds(x(0)); };
    d.rate_second = [](const Vec&) { return 0.0; };
    m.derivatives = std::move(d);
    return m;
}

inline DiffusionModel diff_ex1() {
    return diff_ex1_with(
        "diff-ex1", Domain::Torus, [](double x) { return std::cos(kTwoPi * x); },
        [](double x) { return -kTwoPi * std::sin(kTwoPi * x); },
        [](double x) { return -kTwoPi * kTwoPi * std::cos(kTwoPi * x); });
}

inline DiffusionModel diff_ex1_line() {
    return diff_ex1_with(
        "diff-ex1-line", Domain::Line, [](double x) { return x; }, [](double) { return 1.0; },
        [](double) { return 0.0; });
}

/// sigma = 1, f(x) = cos(2 pi x) + 1.5, g = 0, h = 1.
inline DiffusionModel diff_ex2() {
    DiffusionModel m;
    m.name = "diff-ex2";
    m.drift = [](const Vec&) { return scalar_vec(0.0); };
    m.sigma = [](const Vec&) { return scalar_vec(1.0); };
    m.rate = [](const Vec& x) { return std::cos(kTwoPi * x(0)) + 1.5; };
    m.forcing = [](const Vec&) { return 0.0; };
    m.noise = [](const Vec&) { return 1.0; };
    DiffusionDerivatives d;
    d.sigma_jacobian = [](const Vec&) { return Mat::Zero(1, 1).eval(); };
    d.rate_gradient = [](const Vec& x) { return scalar_vec(-kTwoPi * std::sin(kTwoPi * x(0))); };
    d.sigma_second = [](const Vec&) { return 0.0; };
    d.rate_second = [](const Vec& x) { return -kTwoPi * kTwoPi * std::cos(kTwoPi * x(0)); };
    m.derivatives = std::move(d);
    return m;
}

} // namespace models

inline const std::vector<ModelEntry>& model_registry() {
    static const std::vector<ModelEntry> registry = [] {
        std::vector<ModelEntry> r;
        r.push_back({"avg-ex", models::avg_ex(), scalar_vec(1.0), 0.0});
        r.push_back({"diff-ex1", models::diff_ex1(), scalar_vec(1.0), 0.0});
        r.push_back({"diff-ex1-line", models::diff_ex1_line(), scalar_vec(1.0), 0.0});
        r.push_back({"diff-ex2", models::diff_ex2(), scalar_vec(1.0), 0.0});
        return r;
    }();
    return registry;
}

inline const ModelEntry& find_model(std::string_view name) {
    for (const auto& entry : model_registry()) {
        if (entry.name == name) {
            return entry;
        }
    }
    throw ConfigError("unknown model '" + std::string(name) + "'");
}

inline int model_dim(const AnyModel& model) {
    return std::visit([](const auto& m) { return m.dim; }, model);
}

inline Domain model_domain(const AnyModel& model) {
    return std::visit([](const auto& m) { return m.domain; }, model);
}

/// Number of Gamma components drawn per step (0 for the diffusion family,
/// whose only noise is the scalar gamma).
inline int model_noise_dim(const AnyModel& model) {
    if (const auto* avg = std::get_if<AveragingModel>(&model)) {
        return avg->noise_dim;
    }
    return 0;
}

} // namespace apsde
