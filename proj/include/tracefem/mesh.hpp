#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tracefem/geometry.hpp"

namespace tracefem {

/// Fixed tetrahedral background triangulation of a box.
/// Immutable after construction; all time-dependent state lives elsewhere.
struct BackgroundMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 4>> tets;

    // vertex -> incident tets, CSR layout, tet ids ascending per vertex.
    std::vector<int> v2t_offset;
    std::vector<int> v2t;

    Box box;
    double cell_size = 0.0; // Kuhn cube side; 0 for hand-built meshes
    double h = 0.0;         // mesh size: max tet diameter
    double kappa = 0.0;     // shape regularity: max over tets of h_S / rho_S

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_tets() const { return static_cast<int>(tets.size()); }

    struct TetRange {
        const int* b;
        const int* e;
        const int* begin() const { return b; }
        const int* end() const { return e; }
    };
    TetRange tets_of_vertex(int v) const {
        return {v2t.data() + v2t_offset[v], v2t.data() + v2t_offset[v + 1]};
    }

    double tet_volume(int t) const {
        const auto& k = tets[t];
        return det3(vertices[k[1]] - vertices[k[0]], vertices[k[2]] - vertices[k[0]],
                    vertices[k[3]] - vertices[k[0]]) / 6.0;
    }
};

namespace detail {

inline void build_vertex_adjacency(BackgroundMesh& mesh) {
    const int nv = mesh.num_vertices();
    mesh.v2t_offset.assign(nv + 1, 0);
    for (const auto& tet : mesh.tets)
        for (int v : tet)
            ++mesh.v2t_offset[v + 1];
    for (int v = 0; v < nv; ++v)
        mesh.v2t_offset[v + 1] += mesh.v2t_offset[v];
    mesh.v2t.resize(mesh.v2t_offset[nv]);
    std::vector<int> cursor(mesh.v2t_offset.begin(), mesh.v2t_offset.end() - 1);
    for (int t = 0; t < mesh.num_tets(); ++t)
        for (int v : mesh.tets[t])
            mesh.v2t[cursor[v]++] = t;
}

inline double tet_diameter(const BackgroundMesh& m, int t) {
    const auto& k = m.tets[t];
    double d = 0.0;
    for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b)
            d = std::max(d, distance(m.vertices[k[a]], m.vertices[k[b]]));
    return d;
}

inline double tet_inradius(const BackgroundMesh& m, int t) {
    const auto& k = m.tets[t];
    const Vec3 p0 = m.vertices[k[0]], p1 = m.vertices[k[1]], p2 = m.vertices[k[2]],
               p3 = m.vertices[k[3]];
    const double vol = std::abs(det3(p1 - p0, p2 - p0, p3 - p0)) / 6.0;
    const double area = 0.5 * (norm(cross(p2 - p1, p3 - p1)) + norm(cross(p2 - p0, p3 - p0)) +
                               norm(cross(p1 - p0, p3 - p0)) + norm(cross(p1 - p0, p2 - p0)));
    return 3.0 * vol / area;
}

inline void finalize_mesh_metrics(BackgroundMesh& mesh) {
    build_vertex_adjacency(mesh);
    double hmax = 0.0, ratio = 0.0;
    for (int t = 0; t < mesh.num_tets(); ++t) {
        const double hs = tet_diameter(mesh, t);
        hmax = std::max(hmax, hs);
        ratio = std::max(ratio, hs / tet_inradius(mesh, t));
    }
    mesh.h = hmax;
    mesh.kappa = ratio;
}

} // namespace detail

/// Uniform cube grid over `box` with side `cell`, each cube split into the 6
/// Kuhn tetrahedra sharing the main diagonal from the lexicographically
/// smallest to the largest corner. Conforming and shape regular with a
/// kappa independent of `cell`.
inline BackgroundMesh build_kuhn_mesh(const Box& box, double cell) {
    if (!(cell > 0.0))
        throw std::invalid_argument("build_kuhn_mesh: cell size must be positive");
    const Vec3 ext = box.extent();
    int n[3];
    for (int d = 0; d < 3; ++d) {
        if (!(ext[d] > 0.0))
            throw std::invalid_argument("build_kuhn_mesh: box must have positive extent");
        const double cells = ext[d] / cell;
        n[d] = static_cast<int>(std::lround(cells));
        if (n[d] < 1 || std::abs(n[d] * cell - ext[d]) > 1e-9 * std::max(1.0, ext[d]))
            throw std::invalid_argument(
                "build_kuhn_mesh: box side is not an integer multiple of the cell size");
    }

    BackgroundMesh mesh;
    mesh.box = box;
    mesh.cell_size = cell;

    // Vertices indexed lexicographically by (i, j, k).
    const int nx = n[0] + 1, ny = n[1] + 1, nz = n[2] + 1;
    mesh.vertices.reserve(static_cast<size_t>(nx) * ny * nz);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < ny; ++j)
            for (int k = 0; k < nz; ++k)
                mesh.vertices.push_back(
                    {box.min.x + i * cell, box.min.y + j * cell, box.min.z + k * cell});
    const auto vid = [&](int i, int j, int k) { return (i * ny + j) * nz + k; };

    // Six monotone edge paths from the small to the large cube corner; odd
    // permutations get their last two vertices swapped for positive volume.
    static constexpr int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                        {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    static constexpr bool odd[6] = {false, true, true, false, false, true};

    mesh.tets.reserve(static_cast<size_t>(n[0]) * n[1] * n[2] * 6);
    for (int i = 0; i < n[0]; ++i)
        for (int j = 0; j < n[1]; ++j)
            for (int k = 0; k < n[2]; ++k)
                for (int p = 0; p < 6; ++p) {
                    int c[3] = {i, j, k};
                    std::array<int, 4> tet;
                    tet[0] = vid(c[0], c[1], c[2]);
                    for (int s = 0; s < 3; ++s) {
                        ++c[perms[p][s]];
                        tet[s + 1] = vid(c[0], c[1], c[2]);
                    }
                    if (odd[p])
                        std::swap(tet[2], tet[3]);
                    mesh.tets.push_back(tet);
                }

    detail::finalize_mesh_metrics(mesh);
    return mesh;
}

/// Mesh assembled from explicit vertices and tets (tests, imported data).
inline BackgroundMesh build_mesh_from_tets(std::vector<Vec3> vertices,
                                           std::vector<std::array<int, 4>> tets) {
    BackgroundMesh mesh;
    mesh.vertices = std::move(vertices);
    mesh.tets = std::move(tets);
    Vec3 lo = mesh.vertices.at(0), hi = lo;
    for (const Vec3& p : mesh.vertices)
        for (int d = 0; d < 3; ++d) {
            lo[d] = std::min(lo[d], p[d]);
            hi[d] = std::max(hi[d], p[d]);
        }
    mesh.box = {lo, hi};
    detail::finalize_mesh_metrics(mesh);
    return mesh;
}

/// Gradients of the four barycentric coordinates of a tet; constant vectors
/// summing to zero. Throws for degenerate tets (cannot occur on Kuhn meshes;
/// guards imported ones).
inline std::array<Vec3, 4> p1_basis_gradients(const BackgroundMesh& mesh, int tet_id) {
    const auto& k = mesh.tets.at(tet_id);
    const Vec3 a = mesh.vertices[k[1]] - mesh.vertices[k[0]];
    const Vec3 b = mesh.vertices[k[2]] - mesh.vertices[k[0]];
    const Vec3 c = mesh.vertices[k[3]] - mesh.vertices[k[0]];
    const double det = det3(a, b, c);
    const double scale = std::max({norm(a), norm(b), norm(c)});
    if (std::abs(det) <= 1e-14 * scale * scale * scale)
        throw std::runtime_error("p1_basis_gradients: degenerate tetrahedron " +
                                 std::to_string(tet_id));
    const Vec3 g1 = (1.0 / det) * cross(b, c);
    const Vec3 g2 = (1.0 / det) * cross(c, a);
    const Vec3 g3 = (1.0 / det) * cross(a, b);
    return {-(g1 + g2 + g3), g1, g2, g3};
}

/// Barycentric coordinates of point x w.r.t. tet (lambda_0..lambda_3).
inline std::array<double, 4> barycentric_coords(const BackgroundMesh& mesh, int tet_id,
                                                const Vec3& x) {
    const auto g = p1_basis_gradients(mesh, tet_id);
    const Vec3 r = x - mesh.vertices[mesh.tets[tet_id][0]];
    const double l1 = dot(g[1], r), l2 = dot(g[2], r), l3 = dot(g[3], r);
    return {1.0 - l1 - l2 - l3, l1, l2, l3};
}

} // namespace tracefem
