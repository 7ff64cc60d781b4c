#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tracefem/level_set.hpp"
#include "tracefem/mesh.hpp"
#include "tracefem/quadrature.hpp"
#include "tracefem/sparse.hpp"

namespace tracefem {

/// Dense numbering of the active degrees of freedom (vertices of cut tets).
struct DofMap {
    std::vector<int> active;           // dense index -> global vertex id (ascending)
    std::vector<int> global_to_active; // global vertex id -> dense index or -1

    int size() const { return static_cast<int>(active.size()); }
};

inline DofMap build_dof_map(const BackgroundMesh& mesh, const CutStrip& strip) {
    DofMap map;
    map.active = strip.vertices;
    map.global_to_active.assign(mesh.num_vertices(), -1);
    for (int i = 0; i < map.size(); ++i)
        map.global_to_active[map.active[i]] = i;
    return map;
}

/// Shared sparsity pattern over active dofs: the vertex pairs of cut tets.
inline CsrMatrix build_surface_pattern(const BackgroundMesh& mesh, const CutStrip& strip,
                                       const DofMap& dofs) {
    const int n = dofs.size();
    std::vector<std::vector<int>> cols(n);
    for (int t : strip.tets) {
        const auto& vids = mesh.tets[t];
        for (int a = 0; a < 4; ++a) {
            const int ra = dofs.global_to_active[vids[a]];
            for (int b = 0; b < 4; ++b)
                cols[ra].push_back(dofs.global_to_active[vids[b]]);
        }
    }
    CsrMatrix A;
    A.n = n;
    A.row_ptr.assign(n + 1, 0);
    for (int r = 0; r < n; ++r) {
        auto& c = cols[r];
        std::sort(c.begin(), c.end());
        c.erase(std::unique(c.begin(), c.end()), c.end());
        A.row_ptr[r + 1] = A.row_ptr[r] + static_cast<int>(c.size());
    }
    A.col.reserve(A.row_ptr[n]);
    for (const auto& c : cols)
        A.col.insert(A.col.end(), c.begin(), c.end());
    A.val.assign(A.row_ptr[n], 0.0);
    return A;
}

enum class SurfaceOperator { Mass, FullGradientStiffness, Convection };

namespace detail {

inline void scatter_add(CsrMatrix& A, int r, int c, double v) {
    const auto begin = A.col.begin() + A.row_ptr[r];
    const auto end = A.col.begin() + A.row_ptr[r + 1];
    const auto it = std::lower_bound(begin, end, c);
    A.val[it - A.col.begin()] += v;
}

struct TriangleContext {
    std::array<int, 4> vids;
    std::array<Vec3, 4> grad; // P1 basis gradients on the parent tet
    Vec3 p[3];                // triangle corners
    double area;

    void load(const BackgroundMesh& mesh, const SurfaceTriangle& tri) {
        vids = mesh.tets[tri.parent_tet];
        grad = p1_basis_gradients(mesh, tri.parent_tet);
        for (int i = 0; i < 3; ++i)
            p[i] = tri.corner[i].pos;
        area = tri.area;
    }

    Vec3 point(const SurfaceQuadrature::Point& q) const {
        return q.l0 * p[0] + q.l1 * p[1] + q.l2 * p[2];
    }

    // Barycentric values of the four tet basis functions at a physical point.
    std::array<double, 4> basis(const BackgroundMesh& mesh, const Vec3& x) const {
        const Vec3 r = x - mesh.vertices[vids[0]];
        const double l1 = dot(grad[1], r), l2 = dot(grad[2], r), l3 = dot(grad[3], r);
        return {1.0 - l1 - l2 - l3, l1, l2, l3};
    }
};

} // namespace detail

/// Assembles one of the trace FEM surface operators over the extracted
/// surface. Mass: int u v ds_h. Stiffness: int grad u . grad v ds_h with the
/// full 3D gradients of the bulk P1 basis. Convection: -int (w . grad v) u
/// ds_h with w evaluated analytically at the physical quadrature points.
inline CsrMatrix assemble_surface_matrix(SurfaceOperator kind, const SurfaceTriangulation& surf,
                                         const BackgroundMesh& mesh, const CutStrip& strip,
                                         const DofMap& dofs,
                                         const VectorField& velocity = nullptr,
                                         double time = 0.0) {
    if (kind == SurfaceOperator::Convection && !velocity)
        throw std::invalid_argument("assemble_surface_matrix: convection requires a velocity");
    CsrMatrix A = build_surface_pattern(mesh, strip, dofs);
    const SurfaceQuadrature quad = triangle_quadrature_deg5();

    detail::TriangleContext ctx;
    double local[4][4];
    for (const auto& tri : surf.triangles) {
        ctx.load(mesh, tri);
        for (auto& row : local)
            std::fill(row, row + 4, 0.0);

        switch (kind) {
        case SurfaceOperator::Mass:
            for (const auto& q : quad.points) {
                const auto lam = ctx.basis(mesh, ctx.point(q));
                const double wq = q.w * ctx.area;
                for (int i = 0; i < 4; ++i)
                    for (int j = 0; j < 4; ++j)
                        local[i][j] += wq * lam[i] * lam[j];
            }
            break;
        case SurfaceOperator::FullGradientStiffness:
            // Constant gradients: the integrand is constant on the triangle.
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j)
                    local[i][j] = ctx.area * dot(ctx.grad[i], ctx.grad[j]);
            break;
        case SurfaceOperator::Convection:
            for (const auto& q : quad.points) {
                const Vec3 x = ctx.point(q);
                const auto lam = ctx.basis(mesh, x);
                const Vec3 w = velocity(x, time);
                const double wq = q.w * ctx.area;
                for (int i = 0; i < 4; ++i) {
                    const double wi = dot(w, ctx.grad[i]);
                    for (int j = 0; j < 4; ++j)
                        local[i][j] -= wq * wi * lam[j];
                }
            }
            break;
        }

        for (int i = 0; i < 4; ++i) {
            const int r = dofs.global_to_active[ctx.vids[i]];
            for (int j = 0; j < 4; ++j)
                detail::scatter_add(A, r, dofs.global_to_active[ctx.vids[j]], local[i][j]);
        }
    }
    return A;
}

/// rhs_i = int f v_i ds_h with f evaluated at physical quadrature points.
inline std::vector<double> assemble_surface_load(const ScalarField& f,
                                                 const SurfaceTriangulation& surf,
                                                 const BackgroundMesh& mesh, const DofMap& dofs,
                                                 double time) {
    std::vector<double> rhs(dofs.size(), 0.0);
    const SurfaceQuadrature quad = triangle_quadrature_deg5();
    detail::TriangleContext ctx;
    for (const auto& tri : surf.triangles) {
        ctx.load(mesh, tri);
        for (const auto& q : quad.points) {
            const Vec3 x = ctx.point(q);
            const auto lam = ctx.basis(mesh, x);
            const double fw = f(x, time) * q.w * ctx.area;
            for (int i = 0; i < 4; ++i)
                rhs[dofs.global_to_active[ctx.vids[i]]] += fw * lam[i];
        }
    }
    return rhs;
}

/// rhs_i = int f v_i ds_h for a nodal P1 field given on mesh vertices.
inline std::vector<double> assemble_surface_load_nodal(const std::vector<double>& nodal,
                                                       const SurfaceTriangulation& surf,
                                                       const BackgroundMesh& mesh,
                                                       const DofMap& dofs) {
    std::vector<double> rhs(dofs.size(), 0.0);
    const SurfaceQuadrature quad = triangle_quadrature_deg5();
    detail::TriangleContext ctx;
    for (const auto& tri : surf.triangles) {
        ctx.load(mesh, tri);
        for (const auto& q : quad.points) {
            const auto lam = ctx.basis(mesh, ctx.point(q));
            double fval = 0.0;
            for (int i = 0; i < 4; ++i)
                fval += lam[i] * nodal[ctx.vids[i]];
            const double fw = fval * q.w * ctx.area;
            for (int i = 0; i < 4; ++i)
                rhs[dofs.global_to_active[ctx.vids[i]]] += fw * lam[i];
        }
    }
    return rhs;
}

/// Nodal solution on the active dofs, stored dense with the dof map.
struct ActiveField {
    DofMap dofs;
    std::vector<double> values; // one per active dof

    double at_global(int vertex) const { return values[dofs.global_to_active[vertex]]; }
};

struct SteadySolveStats {
    int iterations = 0;
    double rel_residual = 0.0;
    double estimate_drift = 0.0;
};

/// Solves the steady surface problem (alpha M + nu A + N) u = load(f) with
/// diagonal rescaling and Gauss-Seidel preconditioned GMRES.
inline ActiveField solve_steady(double alpha, double nu, const VectorField& velocity,
                                const ScalarField& f, const SurfaceTriangulation& surf,
                                const BackgroundMesh& mesh, const CutStrip& strip, double time,
                                const GmresOptions& opts = {},
                                SteadySolveStats* stats = nullptr) {
    if (!(alpha > 0.0))
        throw std::invalid_argument("solve_steady: alpha must be positive");
    ActiveField out;
    out.dofs = build_dof_map(mesh, strip);

    const CsrMatrix M = assemble_surface_matrix(SurfaceOperator::Mass, surf, mesh, strip, out.dofs);
    const CsrMatrix A = assemble_surface_matrix(SurfaceOperator::FullGradientStiffness, surf,
                                                mesh, strip, out.dofs);
    CsrMatrix B = M;
    for (size_t k = 0; k < B.val.size(); ++k)
        B.val[k] = alpha * M.val[k] + nu * A.val[k];
    if (velocity) {
        const CsrMatrix N = assemble_surface_matrix(SurfaceOperator::Convection, surf, mesh,
                                                    strip, out.dofs, velocity, time);
        for (size_t k = 0; k < B.val.size(); ++k)
            B.val[k] += N.val[k];
    }
    const std::vector<double> rhs = assemble_surface_load(f, surf, mesh, out.dofs, time);

    const RescaledSystem scaled = diagonal_rescale(B, rhs);
    const GmresResult sol = gmres_gs(scaled.matrix, scaled.rhs, opts);
    out.values = scaled.unscale(sol.x);
    if (stats)
        *stats = {sol.iterations, sol.rel_residual, sol.estimate_drift};
    return out;
}

// ---- surface functionals -------------------------------------------------

/// int u_h ds_h for a nodal field on the active dofs (total mass M_h).
inline double surface_integral(const SurfaceTriangulation& surf, const BackgroundMesh& mesh,
                               const ActiveField& u) {
    const SurfaceQuadrature quad = triangle_quadrature_deg5();
    detail::TriangleContext ctx;
    double total = 0.0;
    for (const auto& tri : surf.triangles) {
        ctx.load(mesh, tri);
        for (const auto& q : quad.points) {
            const auto lam = ctx.basis(mesh, ctx.point(q));
            double uh = 0.0;
            for (int i = 0; i < 4; ++i)
                uh += lam[i] * u.at_global(ctx.vids[i]);
            total += uh * q.w * ctx.area;
        }
    }
    return total;
}

/// || u_exact - u_h ||_{L2(Gamma_h)}^2.
inline double l2_error_sq(const SurfaceTriangulation& surf, const BackgroundMesh& mesh,
                          const ActiveField& u, const ScalarField& exact, double time) {
    const SurfaceQuadrature quad = triangle_quadrature_deg5();
    detail::TriangleContext ctx;
    double total = 0.0;
    for (const auto& tri : surf.triangles) {
        ctx.load(mesh, tri);
        for (const auto& q : quad.points) {
            const Vec3 x = ctx.point(q);
            const auto lam = ctx.basis(mesh, x);
            double uh = 0.0;
            for (int i = 0; i < 4; ++i)
                uh += lam[i] * u.at_global(ctx.vids[i]);
            const double e = exact(x, time) - uh;
            total += e * e * q.w * ctx.area;
        }
    }
    return total;
}

/// || P_h (grad u_exact - grad u_h) ||_{L2(Gamma_h)}^2 with the tangential
/// projector P_h = I - n_h n_h^T of each triangle.
inline double h1_tangential_error_sq(const SurfaceTriangulation& surf, const BackgroundMesh& mesh,
                                     const ActiveField& u, const VectorField& grad_exact,
                                     double time) {
    const SurfaceQuadrature quad = triangle_quadrature_deg5();
    detail::TriangleContext ctx;
    double total = 0.0;
    for (const auto& tri : surf.triangles) {
        ctx.load(mesh, tri);
        Vec3 grad_uh{0.0, 0.0, 0.0};
        for (int i = 0; i < 4; ++i)
            grad_uh += u.at_global(ctx.vids[i]) * ctx.grad[i];
        for (const auto& q : quad.points) {
            const Vec3 e = grad_exact(ctx.point(q), time) - grad_uh;
            const Vec3 pe = e - dot(e, tri.normal) * tri.normal;
            total += norm_sq(pe) * q.w * ctx.area;
        }
    }
    return total;
}

/// int |P_h grad u_h|^2 ds_h, the tangential Dirichlet energy.
inline double tangential_dirichlet_energy(const SurfaceTriangulation& surf,
                                          const BackgroundMesh& mesh, const ActiveField& u) {
    detail::TriangleContext ctx;
    double total = 0.0;
    for (const auto& tri : surf.triangles) {
        ctx.load(mesh, tri);
        Vec3 grad_uh{0.0, 0.0, 0.0};
        for (int i = 0; i < 4; ++i)
            grad_uh += u.at_global(ctx.vids[i]) * ctx.grad[i];
        const Vec3 pg = grad_uh - dot(grad_uh, tri.normal) * tri.normal;
        total += norm_sq(pg) * tri.area;
    }
    return total;
}

} // namespace tracefem
