#pragma once

#include <cmath>
#include <string_view>

#include "apsde/error.hpp"
#include "apsde/types.hpp"

namespace apsde {

enum class Domain { Torus, Line };

inline std::string_view to_string(Domain d) { return d == Domain::Torus ? "torus" : "line"; }

/// Canonical representative of x: coordinates in [0, 1) on the torus, identity
/// on the line. States are stored unwrapped; this is for display and comparison.
inline Vec wrap_torus(const Vec& x, Domain domain) {
    if (!x.allFinite()) {
        throw InvalidStateError("wrap_torus: non-finite coordinate");
    }
    if (domain == Domain::Line) {
        return x;
    }
    Vec out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        double r = x(i) - std::floor(x(i));
        // floor can round x - floor(x) up to exactly 1 for tiny negative x
        if (r >= 1.0) {
            r = 0.0;
        }
        out(i) = r;
    }
    return out;
}

} // namespace apsde
