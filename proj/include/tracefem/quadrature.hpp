#pragma once

#include <array>
#include <cmath>

namespace tracefem {

/// Symmetric 7-point Gaussian rule on the reference triangle, exact for
/// polynomials up to degree 5. Weights are normalized to sum to one, so
/// integrals scale by the physical triangle area.
struct SurfaceQuadrature {
    struct Point {
        double l0, l1, l2; // barycentric
        double w;
    };
    std::array<Point, 7> points;
};

inline SurfaceQuadrature triangle_quadrature_deg5() {
    const double s15 = std::sqrt(15.0);
    const double a1 = (6.0 + s15) / 21.0, w1 = (155.0 + s15) / 1200.0;
    const double a2 = (6.0 - s15) / 21.0, w2 = (155.0 - s15) / 1200.0;
    SurfaceQuadrature q;
    q.points = {{{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 9.0 / 40.0},
                 {a1, a1, 1.0 - 2.0 * a1, w1},
                 {a1, 1.0 - 2.0 * a1, a1, w1},
                 {1.0 - 2.0 * a1, a1, a1, w1},
                 {a2, a2, 1.0 - 2.0 * a2, w2},
                 {a2, 1.0 - 2.0 * a2, a2, w2},
                 {1.0 - 2.0 * a2, a2, a2, w2}}};
    return q;
}

} // namespace tracefem
