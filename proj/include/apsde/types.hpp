#pragma once

#include <Eigen/Dense>

namespace apsde {

/// Largest slow dimension (and Wiener dimension) supported without heap use.
inline constexpr int kMaxDim = 8;

/// Slow-component vector. Dynamic size with inline storage, so scheme steps
/// never allocate.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

/// d x D (or d x d) coefficient matrix with inline storage.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor,
                          kMaxDim, kMaxDim>;

inline Vec scalar_vec(double v) {
    Vec out(1);
    out(0) = v;
    return out;
}

/// The pair (X_n, m_n): slow position and scalar fast variable.
struct SystemState {
    Vec x;
    double m = 0.0;
};

} // namespace apsde
