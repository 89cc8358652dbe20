#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "apsde/error.hpp"
#include "apsde/models.hpp"
#include "apsde/types.hpp"

namespace apsde {

/// Test function of the slow variable with analytic derivatives.
struct TestFunction {
    std::string name;
    int dim = 1;
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> gradient;
    std::function<Mat(const Vec&)> hessian;
    std::function<double(const Vec&)> third; ///< phi''' (d = 1 only)
};

/// Test function of (x, m). Missing members mean the derivative is unavailable.
struct JointTestFunction {
    std::function<double(const Vec&, double)> value;
    std::function<Vec(const Vec&, double)> grad_x;
    std::function<Mat(const Vec&, double)> hess_x;
    std::function<double(const Vec&, double)> d_m;
    std::function<double(const Vec&, double)> d_mm;
};

namespace test_functions {

inline TestFunction constant(double c) {
    return {"constant", 1,
            [c](const Vec&) { return c; },
            [](const Vec& x) { return Vec::Zero(x.size()).eval(); },
            [](const Vec& x) { return Mat::Zero(x.size(), x.size()).eval(); },
            [](const Vec&) { return 0.0; }};
}

inline TestFunction identity() {
    return {"identity", 1,
            [](const Vec& x) { return x(0); },
            [](const Vec& x) {
                Vec g = Vec::Zero(x.size());
                g(0) = 1.0;
                return g;
            },
            [](const Vec& x) { return Mat::Zero(x.size(), x.size()).eval(); },
            [](const Vec&) { return 0.0; }};
}

/// sin(2 pi x) or cos(2 pi x) of the first coordinate.
inline TestFunction trig(bool sine) {
    constexpr double k = 2.0 * std::numbers::pi;
    auto f0 = [sine](double t) { return sine ? std::sin(t) : std::cos(t); };
    auto f1 = [sine](double t) { return sine ? std::cos(t) : -std::sin(t); };
    return {sine ? "sin2pix" : "cos2pix", 1,
            [f0](const Vec& x) { return f0(k * x(0)); },
            [f1](const Vec& x) {
                Vec g = Vec::Zero(x.size());
                g(0) = k * f1(k * x(0));
                return g;
            },
            [f0](const Vec& x) {
                Mat h = Mat::Zero(x.size(), x.size());
                h(0, 0) = -k * k * f0(k * x(0));
                return h;
            },
            [f1](const Vec& x) { return -k * k * k * f1(k * x(0)); }};
}

} // namespace test_functions

inline TestFunction find_test_function(std::string_view name) {
    if (name == "identity") {
        return test_functions::identity();
    }
    if (name == "sin2pix") {
        return test_functions::trig(true);
    }
    if (name == "cos2pix") {
        return test_functions::trig(false);
    }
    if (name == "constant") {
        return test_functions::constant(1.0);
    }
    throw ConfigError("unknown test function '" + std::string(name) + "'");
}

/// Views an x-only test function as a function of (x, m).
inline JointTestFunction lift(const TestFunction& phi) {
    JointTestFunction out;
    out.value = [phi](const Vec& x, double) { return phi.value(x); };
    out.grad_x = [phi](const Vec& x, double) { return phi.gradient(x); };
    if (phi.hessian) {
        out.hess_x = [phi](const Vec& x, double) { return phi.hessian(x); };
    }
    out.d_m = [](const Vec&, double) { return 0.0; };
    out.d_mm = [](const Vec&, double) { return 0.0; };
    return out;
}

// ---------------------------------------------------------------------------
// Generators

/// (1/eps) L_OU phi + L_0 phi with L_OU = -m d_m + h^2 d_mm and
/// L_0 = b . grad_x + 1/2 sigma sigma^T : hess_x.
inline double generator_avg_apply(const AveragingModel& model, const JointTestFunction& phi,
                                  const Vec& x, double m, double eps) {
    if (!phi.d_m || !phi.d_mm || !phi.grad_x) {
        throw CapabilityError("generator_avg_apply: test function lacks d_m, d_mm or grad_x");
    }
    const double h = model.fast_scale(x);
    const double ou = -m * phi.d_m(x, m) + h * h * phi.d_mm(x, m);
    double slow = model.drift(x, m).dot(phi.grad_x(x, m));
    if (model.has_diffusion()) {
        if (!phi.hess_x) {
            throw CapabilityError("generator_avg_apply: diffusion term needs hess_x");
        }
        const Mat s = model.diffusion(x, m);
        slow += 0.5 * ((s * s.transpose()).cwiseProduct(phi.hess_x(x, m))).sum();
    }
    return ou / eps + slow;
}

/// eps^-2 L_OU + eps^-1 L_1 + L_0 with
///   L_OU = -f m d_m + 1/2 f^2 h^2 d_mm,  L_1 = m sigma . grad_x + f g d_m,  L_0 = b . grad_x.
inline double generator_diff_apply(const DiffusionModel& model, const JointTestFunction& phi,
                                   const Vec& x, double m, double eps) {
    if (!phi.d_m || !phi.d_mm || !phi.grad_x) {
        throw CapabilityError("generator_diff_apply: test function lacks d_m, d_mm or grad_x");
    }
    const double f = model.rate(x);
    const double g = model.forcing(x);
    const double h = model.noise(x);
    const double dm = phi.d_m(x, m);
    const Vec grad = phi.grad_x(x, m);
    const double ou = -f * m * dm + 0.5 * f * f * h * h * phi.d_mm(x, m);
    const double l1 = m * model.sigma(x).dot(grad) + f * g * dm;
    const double l0 = model.drift(x).dot(grad);
    return ou / (eps * eps) + l1 / eps + l0;
}

/// Limiting generator of the averaging regime: bbar . grad + 1/2 abar : hess.
inline double limiting_generator_apply(const AveragingModel& model, const TestFunction& phi,
                                       const Vec& x,
                                       int quadrature_order = kDefaultQuadratureOrder) {
    double out = averaged_drift(model, x, quadrature_order).dot(phi.gradient(x));
    if (model.has_diffusion()) {
        if (!phi.hessian) {
            throw CapabilityError("limiting_generator_apply: diffusion term needs the Hessian");
        }
        out += 0.5 * (averaged_diffusion_matrix(model, x, quadrature_order)
                          .cwiseProduct(phi.hessian(x)))
                         .sum();
    }
    return out;
}

/// Limiting generator of the diffusion regime:
/// (limiting drift) . grad + h^2/2 sigma sigma^T : hess.
inline double limiting_generator_apply(const DiffusionModel& model, const TestFunction& phi,
                                       const Vec& x) {
    if (!phi.hessian) {
        throw CapabilityError("limiting_generator_apply: needs the Hessian");
    }
    const Vec s = model.sigma(x);
    const double h = model.noise(x);
    return limiting_diffusion_drift(model, x).dot(phi.gradient(x)) +
           0.5 * h * h * s.dot(phi.hessian(x) * s);
}

// ---------------------------------------------------------------------------
// Perturbed test function of the diffusion regime (d = 1)
//
// With s = sigma / f, u = s phi' and w = s u':
//   phi_eps = phi + eps m u + eps^2 (m^2 / 2) w.

namespace detail {

struct PerturbationTerms {
    double u;    ///< s phi'
    double du;   ///< (s phi')'
    double w;    ///< s (s phi')'
    double dw;   ///< (s (s phi')')'
};

inline PerturbationTerms perturbation_terms(const DiffusionModel& model, const TestFunction& phi,
                                            const Vec& x) {
    const auto& d = *model.derivatives;
    const double sig = model.sigma(x)(0);
    const double dsig = d.sigma_jacobian(x)(0, 0);
    const double ddsig = d.sigma_second(x);
    const double f = model.rate(x);
    const double df = d.rate_gradient(x)(0);
    const double ddf = d.rate_second(x);

    const double inv_f = 1.0 / f;
    const double d_inv_f = -df * inv_f * inv_f;
    const double dd_inv_f = (2.0 * df * df - f * ddf) * inv_f * inv_f * inv_f;
    const double s = sig * inv_f;
    const double ds = dsig * inv_f + sig * d_inv_f;
    const double dds = ddsig * inv_f + 2.0 * dsig * d_inv_f + sig * dd_inv_f;

    const double p1 = phi.gradient(x)(0);
    const double p2 = phi.hessian(x)(0, 0);
    const double p3 = phi.third(x);

    const double u = s * p1;
    const double du = ds * p1 + s * p2;
    const double ddu = dds * p1 + 2.0 * ds * p2 + s * p3;
    return {u, du, s * du, ds * du + s * ddu};
}

inline void require_perturbation_capability(const DiffusionModel& model, const TestFunction& phi) {
    if (model.dim != 1 || phi.dim != 1) {
        throw UnsupportedDimensionError("perturbed test function only realized for d = 1");
    }
    if (!model.derivatives || !model.derivatives->sigma_jacobian ||
        !model.derivatives->rate_gradient || !model.derivatives->sigma_second ||
        !model.derivatives->rate_second) {
        throw CapabilityError("model '" + model.name + "' lacks second derivatives of sigma and f");
    }
    if (!phi.gradient || !phi.hessian || !phi.third) {
        throw CapabilityError("test function '" + phi.name + "' lacks derivatives up to order 3");
    }
}

} // namespace detail

/// phi + eps phi_1 + eps^2 phi_2 at (x, m).
inline double perturbed_phi_diff(const DiffusionModel& model, const TestFunction& phi,
                                 const Vec& x, double m, double eps) {
    detail::require_perturbation_capability(model, phi);
    const auto t = detail::perturbation_terms(model, phi, x);
    return phi.value(x) + eps * m * t.u + eps * eps * 0.5 * m * m * t.w;
}

/// phi_eps with the derivatives generator_diff_apply needs.
inline JointTestFunction perturbed_test_function(const DiffusionModel& model,
                                                 const TestFunction& phi, double eps) {
    detail::require_perturbation_capability(model, phi);
    JointTestFunction out;
    out.value = [model, phi, eps](const Vec& x, double m) {
        return perturbed_phi_diff(model, phi, x, m, eps);
    };
    out.grad_x = [model, phi, eps](const Vec& x, double m) {
        const auto t = detail::perturbation_terms(model, phi, x);
        return scalar_vec(phi.gradient(x)(0) + eps * m * t.du + eps * eps * 0.5 * m * m * t.dw);
    };
    out.d_m = [model, phi, eps](const Vec& x, double m) {
        const auto t = detail::perturbation_terms(model, phi, x);
        return eps * t.u + eps * eps * m * t.w;
    };
    out.d_mm = [model, phi, eps](const Vec& x, double) {
        const auto t = detail::perturbation_terms(model, phi, x);
        return eps * eps * t.w;
    };
    return out;
}

struct GeneratorGapPoint {
    double eps = 0.0;
    double max_normalized_gap = 0.0;
};

/// Per eps, max over the (x, m) grid of |L^eps phi_eps - L phi| / (eps |m| + eps^2 m^2).
/// Cells whose denominator is below 1e-12 are skipped.
inline std::vector<GeneratorGapPoint> generator_gap(const DiffusionModel& model,
                                                    const TestFunction& phi,
                                                    const std::vector<double>& x_grid,
                                                    const std::vector<double>& m_grid,
                                                    const std::vector<double>& eps_list) {
    std::vector<GeneratorGapPoint> out;
    for (double eps : eps_list) {
        const JointTestFunction phi_eps = perturbed_test_function(model, phi, eps);
        double worst = 0.0;
        for (double xv : x_grid) {
            const Vec x = scalar_vec(xv);
            const double limit = limiting_generator_apply(model, phi, x);
            for (double m : m_grid) {
                const double denom = eps * std::fabs(m) + eps * eps * m * m;
                if (denom < 1e-12) {
                    continue;
                }
                const double gap = std::fabs(generator_diff_apply(model, phi_eps, x, m, eps) - limit);
                worst = std::max(worst, gap / denom);
            }
        }
        out.push_back({eps, worst});
    }
    return out;
}

} // namespace apsde
