#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracefem/mesh.hpp"

namespace tracefem {

using ScalarField = std::function<double(const Vec3&, double)>;
using VectorField = std::function<Vec3(const Vec3&, double)>;

/// Nodal P1 level-set values at one time instant; the zero level of the
/// interpolant defines the discrete surface.
struct LevelSetField {
    const BackgroundMesh* mesh = nullptr;
    std::vector<double> nodal_values;
    double time = 0.0;
};

inline double sign_cleanup_eps(const BackgroundMesh& mesh) { return 1e-12 * mesh.h; }

/// Replaces any nodal value with |phi| < 1e-12*h by +1e-12*h, so no nodal
/// value is exactly zero and every cut is a genuine sign change.
inline void sign_cleanup(LevelSetField& field) {
    const double eps = sign_cleanup_eps(*field.mesh);
    for (double& v : field.nodal_values)
        if (std::abs(v) < eps)
            v = eps;
}

inline LevelSetField interpolate_levelset(const ScalarField& phi, const BackgroundMesh& mesh,
                                          double t) {
    LevelSetField field;
    field.mesh = &mesh;
    field.time = t;
    field.nodal_values.resize(mesh.num_vertices());
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        const double val = phi(mesh.vertices[v], t);
        if (!std::isfinite(val))
            throw std::runtime_error("interpolate_levelset: non-finite value at vertex " +
                                     std::to_string(v));
        field.nodal_values[v] = val;
    }
    sign_cleanup(field);
    return field;
}

/// A corner of a surface triangle: the cut point on the mesh edge (va, vb),
/// va < vb, at parameter t from va. Computed canonically from the smaller
/// vertex id so the coordinates are bit-identical across neighboring tets.
struct CutPoint {
    Vec3 pos;
    int va = -1, vb = -1;
    double t = 0.0;
};

struct SurfaceTriangle {
    std::array<CutPoint, 3> corner;
    int parent_tet = -1;
    double area = 0.0;
    Vec3 normal; // unit, oriented with grad(phi_h) on the parent tet
};

struct SurfaceTriangulation {
    std::vector<SurfaceTriangle> triangles;
    double total_area = 0.0;
    int num_triangles() const { return static_cast<int>(triangles.size()); }
};

namespace detail {

inline CutPoint cut_edge(const std::array<int, 4>& vids, const Vec3* pos, const double* phi,
                         int a, int b) {
    if (vids[a] > vids[b])
        std::swap(a, b);
    CutPoint c;
    c.va = vids[a];
    c.vb = vids[b];
    c.t = phi[a] / (phi[a] - phi[b]);
    c.pos = pos[a] + c.t * (pos[b] - pos[a]);
    return c;
}

inline void emit_triangle(std::vector<SurfaceTriangle>& out, const CutPoint& p0,
                          const CutPoint& p1, const CutPoint& p2, int parent,
                          const Vec3& grad_phi) {
    SurfaceTriangle tri;
    tri.corner = {p0, p1, p2};
    tri.parent_tet = parent;
    Vec3 n = cross(p1.pos - p0.pos, p2.pos - p0.pos);
    if (dot(n, grad_phi) < 0.0) {
        std::swap(tri.corner[1], tri.corner[2]);
        n = -n;
    }
    const double len = norm(n);
    tri.area = 0.5 * len;
    // Zero-area slivers are kept; give them the gradient direction.
    tri.normal = len > 0.0 ? (1.0 / len) * n : (1.0 / norm(grad_phi)) * grad_phi;
    out.push_back(tri);
}

/// Zero level of the linear interpolant within one tet. Appends 0, 1 or 2
/// triangles: a 1-vs-3 sign split yields a triangle, a 2-vs-2 split a planar
/// quadrilateral divided along its shorter diagonal.
inline void cut_tetrahedron(std::vector<SurfaceTriangle>& out, const std::array<int, 4>& vids,
                            const Vec3* pos, const double* phi, int parent,
                            const Vec3& grad_phi) {
    int neg[4], posi[4], nn = 0, np = 0;
    for (int i = 0; i < 4; ++i)
        (phi[i] < 0.0 ? neg[nn++] : posi[np++]) = i;
    if (nn == 0 || nn == 4)
        return;

    if (nn == 1 || nn == 3) {
        const int apex = nn == 1 ? neg[0] : posi[0];
        const int* rest = nn == 1 ? posi : neg;
        const CutPoint p0 = cut_edge(vids, pos, phi, apex, rest[0]);
        const CutPoint p1 = cut_edge(vids, pos, phi, apex, rest[1]);
        const CutPoint p2 = cut_edge(vids, pos, phi, apex, rest[2]);
        emit_triangle(out, p0, p1, p2, parent, grad_phi);
        return;
    }

    // 2-vs-2: corners in cycle order ac, ad, bd, bc (consecutive corners
    // share a tet vertex, so the polygon is non-self-intersecting).
    const int a = neg[0], b = neg[1], c = posi[0], d = posi[1];
    const CutPoint pac = cut_edge(vids, pos, phi, a, c);
    const CutPoint pad = cut_edge(vids, pos, phi, a, d);
    const CutPoint pbd = cut_edge(vids, pos, phi, b, d);
    const CutPoint pbc = cut_edge(vids, pos, phi, b, c);
    if (distance(pac.pos, pbd.pos) <= distance(pad.pos, pbc.pos)) {
        emit_triangle(out, pac, pad, pbd, parent, grad_phi);
        emit_triangle(out, pac, pbd, pbc, parent, grad_phi);
    } else {
        emit_triangle(out, pad, pbd, pbc, parent, grad_phi);
        emit_triangle(out, pad, pbc, pac, parent, grad_phi);
    }
}

} // namespace detail

/// Extracts the discrete surface from a cleaned level-set field. There are no
/// restrictions on how the surface cuts the mesh; small cuts are kept as-is.
inline SurfaceTriangulation extract_surface(const LevelSetField& field) {
    const BackgroundMesh& mesh = *field.mesh;
    SurfaceTriangulation surf;
    double phi[4];
    Vec3 pos[4];
    for (int t = 0; t < mesh.num_tets(); ++t) {
        const auto& vids = mesh.tets[t];
        bool has_neg = false, has_pos = false;
        for (int i = 0; i < 4; ++i) {
            phi[i] = field.nodal_values[vids[i]];
            (phi[i] < 0.0 ? has_neg : has_pos) = true;
        }
        if (!has_neg || !has_pos)
            continue;
        for (int i = 0; i < 4; ++i)
            pos[i] = mesh.vertices[vids[i]];
        const auto g = p1_basis_gradients(mesh, t);
        const Vec3 grad_phi = phi[0] * g[0] + phi[1] * g[1] + phi[2] * g[2] + phi[3] * g[3];
        detail::cut_tetrahedron(surf.triangles, vids, pos, phi, t, grad_phi);
    }
    surf.total_area = 0.0;
    for (const auto& tri : surf.triangles)
        surf.total_area += tri.area;
    return surf;
}

/// Cut strip: tets whose nodal values change sign, and the active vertex set
/// (all vertices of those tets). Both sorted ascending.
struct CutStrip {
    std::vector<int> tets;
    std::vector<int> vertices;
};

inline CutStrip cut_strip(const LevelSetField& field) {
    const BackgroundMesh& mesh = *field.mesh;
    CutStrip strip;
    std::vector<uint8_t> active(mesh.num_vertices(), 0);
    for (int t = 0; t < mesh.num_tets(); ++t) {
        const auto& vids = mesh.tets[t];
        bool has_neg = false, has_pos = false;
        for (int i = 0; i < 4; ++i)
            (field.nodal_values[vids[i]] < 0.0 ? has_neg : has_pos) = true;
        if (has_neg && has_pos) {
            strip.tets.push_back(t);
            for (int v : vids)
                active[v] = 1;
        }
    }
    if (strip.tets.empty())
        throw std::runtime_error("cut_strip: zero level set does not intersect the mesh");
    for (int v = 0; v < mesh.num_vertices(); ++v)
        if (active[v])
            strip.vertices.push_back(v);
    return strip;
}

/// Interpolates a nodal field at a cut point (linear along the mesh edge).
inline double value_at_cut_point(const CutPoint& c, const std::vector<double>& nodal) {
    return nodal[c.va] + c.t * (nodal[c.vb] - nodal[c.va]);
}

/// True when every triangle edge is shared by exactly two triangles. Edges
/// are matched combinatorially through the mesh edges carrying the corners,
/// so the test is exact. Holds for closed surfaces strictly inside the box.
inline bool surface_is_watertight(const SurfaceTriangulation& surf) {
    using EdgeKey = std::pair<int, int>;                 // corner = mesh edge
    std::map<std::pair<EdgeKey, EdgeKey>, int> count;    // triangle edge = corner pair
    for (const auto& tri : surf.triangles) {
        const EdgeKey k[3] = {{tri.corner[0].va, tri.corner[0].vb},
                              {tri.corner[1].va, tri.corner[1].vb},
                              {tri.corner[2].va, tri.corner[2].vb}};
        for (int e = 0; e < 3; ++e) {
            EdgeKey u = k[e], v = k[(e + 1) % 3];
            if (v < u)
                std::swap(u, v);
            ++count[{u, v}];
        }
    }
    for (const auto& [edge, c] : count)
        if (c != 2)
            return false;
    return !surf.triangles.empty();
}

} // namespace tracefem
