#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <stdexcept>
#include <vector>

#include "tracefem/assembly.hpp"
#include "tracefem/level_set.hpp"
#include "tracefem/mesh.hpp"

namespace tracefem {

enum class VertexStatus : uint8_t { Unknown, Active, Finished };

/// Per-vertex state of the fast marching extension. Active vertices hold
/// their current best candidate in dist/u_ext; finished vertices hold final
/// values.
struct NarrowBandState {
    const BackgroundMesh* mesh = nullptr;
    std::vector<VertexStatus> status;
    std::vector<double> dist;
    std::vector<double> u_ext;
    double stop_radius = std::numeric_limits<double>::infinity();

    double band_min_u = 0.0, band_max_u = 0.0; // range of the seed values
    double max_init_dist = 0.0;    // largest seed distance
    double max_marched_dist = 0.0; // largest distance finalized by march()
    int finished_count = 0;

    bool is_finished(int v) const { return status[v] == VertexStatus::Finished; }
};

namespace detail {

constexpr double kBaryTol = 1e-12;

/// Candidate distance and extension value for point x from 1-3 finished
/// simplex vertices: orthogonal projection onto their point/line/plane with
/// linear interpolation when the projection lands inside the simplex, else
/// the nearest vertex by d(y) + |x - y| (ties to the smaller index).
inline void simplex_candidate(const Vec3* y, const double* d, const double* u, int count,
                              const Vec3& x, double& d_out, double& u_out) {
    if (count >= 2) {
        if (count == 2) {
            const Vec3 a = y[1] - y[0];
            const double len_sq = norm_sq(a);
            if (len_sq > 0.0) {
                const double s = dot(x - y[0], a) / len_sq;
                if (s >= -kBaryTol && s <= 1.0 + kBaryTol) {
                    const Vec3 p = y[0] + s * a;
                    d_out = (1.0 - s) * d[0] + s * d[1] + distance(x, p);
                    u_out = (1.0 - s) * u[0] + s * u[1];
                    return;
                }
            }
        } else {
            const Vec3 a = y[1] - y[0], b = y[2] - y[0], c = x - y[0];
            const double aa = norm_sq(a), ab = dot(a, b), bb = norm_sq(b);
            const double det = aa * bb - ab * ab;
            if (det > 0.0) {
                const double s = (bb * dot(a, c) - ab * dot(b, c)) / det;
                const double t = (aa * dot(b, c) - ab * dot(a, c)) / det;
                if (s >= -kBaryTol && t >= -kBaryTol && s + t <= 1.0 + kBaryTol) {
                    const Vec3 p = y[0] + s * a + t * b;
                    d_out = (1.0 - s - t) * d[0] + s * d[1] + t * d[2] + distance(x, p);
                    u_out = (1.0 - s - t) * u[0] + s * u[1] + t * u[2];
                    return;
                }
            }
        }
    }
    int best = 0;
    double best_d = d[0] + distance(x, y[0]);
    for (int j = 1; j < count; ++j) {
        const double dj = d[j] + distance(x, y[j]);
        if (dj < best_d) {
            best_d = dj;
            best = j;
        }
    }
    d_out = best_d;
    u_out = u[best];
}

/// Best candidate for vertex x over the finished vertices of tet t.
/// Returns false when the tet has none.
inline bool tet_candidate(const NarrowBandState& state, int t, int x, double& d_out,
                          double& u_out) {
    const BackgroundMesh& mesh = *state.mesh;
    Vec3 y[3];
    double d[3], u[3];
    int count = 0;
    for (int v : mesh.tets[t]) {
        if (v != x && state.is_finished(v)) {
            y[count] = mesh.vertices[v];
            d[count] = state.dist[v];
            u[count] = state.u_ext[v];
            ++count;
        }
    }
    if (count == 0)
        return false;
    simplex_candidate(y, d, u, count, mesh.vertices[x], d_out, u_out);
    return true;
}

/// Distance from x to one surface triangle, following the initialization
/// rule: |x - P x| when the in-plane projection P x lies inside the
/// triangle, otherwise the nearest triangle corner.
inline double triangle_init_distance(const SurfaceTriangle& tri, const Vec3& x) {
    const Vec3 a = tri.corner[1].pos - tri.corner[0].pos;
    const Vec3 b = tri.corner[2].pos - tri.corner[0].pos;
    const Vec3 c = x - tri.corner[0].pos;
    const double aa = norm_sq(a), ab = dot(a, b), bb = norm_sq(b);
    const double det = aa * bb - ab * ab;
    if (det > 0.0) {
        const double s = (bb * dot(a, c) - ab * dot(b, c)) / det;
        const double t = (aa * dot(b, c) - ab * dot(a, c)) / det;
        if (s >= -kBaryTol && t >= -kBaryTol && s + t <= 1.0 + kBaryTol)
            return distance(x, tri.corner[0].pos + s * a + t * b);
    }
    double best = distance(x, tri.corner[0].pos);
    for (int j = 1; j < 3; ++j)
        best = std::min(best, distance(x, tri.corner[j].pos));
    return best;
}

} // namespace detail

/// Seeds the band: active dofs become finished with u_ext = u and d(x) the
/// minimum of the per-triangle distances over incident cut tets; their
/// unknown neighbors join the active set with initial candidates.
inline NarrowBandState init_band(const SurfaceTriangulation& surf, const BackgroundMesh& mesh,
                                 const ActiveField& u) {
    if (surf.triangles.empty())
        throw std::invalid_argument("init_band: empty surface");
    NarrowBandState state;
    state.mesh = &mesh;
    const int nv = mesh.num_vertices();
    state.status.assign(nv, VertexStatus::Unknown);
    state.dist.assign(nv, std::numeric_limits<double>::infinity());
    state.u_ext.assign(nv, 0.0);

    state.band_min_u = std::numeric_limits<double>::infinity();
    state.band_max_u = -state.band_min_u;
    for (int i = 0; i < u.dofs.size(); ++i) {
        const int v = u.dofs.active[i];
        state.status[v] = VertexStatus::Finished;
        state.u_ext[v] = u.values[i];
        state.band_min_u = std::min(state.band_min_u, u.values[i]);
        state.band_max_u = std::max(state.band_max_u, u.values[i]);
    }
    state.finished_count = u.dofs.size();

    for (const auto& tri : surf.triangles)
        for (int v : mesh.tets[tri.parent_tet]) {
            const double d = detail::triangle_init_distance(tri, mesh.vertices[v]);
            state.dist[v] = std::min(state.dist[v], d);
        }
    for (int v : u.dofs.active)
        state.max_init_dist = std::max(state.max_init_dist, state.dist[v]);
    return state;
}

/// Greedy front propagation. Finalizes active vertices in order of their
/// candidate distance; new vertices join the active set only while the
/// finalized distance stays below stop_radius. Checks the finalization-order
/// monotonicity and the discrete max principle on the fly.
inline void march(NarrowBandState& state) {
    const BackgroundMesh& mesh = *state.mesh;
    using HeapItem = std::pair<double, int>;
    std::priority_queue<HeapItem, std::vector<HeapItem>, std::greater<HeapItem>> heap;
    int active_count = 0;

    const auto activate_or_improve = [&](int x, bool allow_activation) {
        if (state.status[x] == VertexStatus::Unknown) {
            if (!allow_activation)
                return;
            // Full scan: earlier finalizations may have been gated away.
            double best_d = std::numeric_limits<double>::infinity(), best_u = 0.0;
            for (int t : mesh.tets_of_vertex(x)) {
                double d, u;
                if (detail::tet_candidate(state, t, x, d, u) && d < best_d) {
                    best_d = d;
                    best_u = u;
                }
            }
            state.status[x] = VertexStatus::Active;
            state.dist[x] = best_d;
            state.u_ext[x] = best_u;
            ++active_count;
            heap.emplace(best_d, x);
        }
    };
    const auto improve_from_tet = [&](int x, int t) {
        double d, u;
        if (detail::tet_candidate(state, t, x, d, u) && d < state.dist[x]) {
            state.dist[x] = d;
            state.u_ext[x] = u;
            heap.emplace(d, x);
        }
    };

    // Initial active set: unknown vertices sharing a tet with the band.
    for (int t = 0; t < mesh.num_tets(); ++t) {
        const auto& vids = mesh.tets[t];
        bool has_finished = false;
        for (int v : vids)
            has_finished |= state.is_finished(v);
        if (!has_finished)
            continue;
        for (int v : vids)
            activate_or_improve(v, true);
    }

    const double range_tol = 1e-9 * (state.band_max_u - state.band_min_u + 1.0);

    while (!heap.empty()) {
        const auto [d, x] = heap.top();
        heap.pop();
        if (state.status[x] != VertexStatus::Active || d != state.dist[x])
            continue; // stale entry
        state.status[x] = VertexStatus::Finished;
        ++state.finished_count;
        --active_count;

        if (d < state.max_marched_dist - 1e-9 * (mesh.h + state.max_marched_dist))
            throw std::runtime_error("march: finalized distances are not monotone");
        state.max_marched_dist = std::max(state.max_marched_dist, d);
        if (state.u_ext[x] < state.band_min_u - range_tol ||
            state.u_ext[x] > state.band_max_u + range_tol)
            throw std::runtime_error("march: extension violates the discrete max principle");

        const bool grow = d <= state.stop_radius;
        for (int t : mesh.tets_of_vertex(x)) {
            for (int v : mesh.tets[t]) {
                if (state.is_finished(v))
                    continue;
                if (state.status[v] == VertexStatus::Active)
                    improve_from_tet(v, t);
                else
                    activate_or_improve(v, grow);
            }
        }
    }
    if (active_count != 0)
        throw std::runtime_error("march: heap exhausted with active vertices remaining");
}

/// Widened strip: the cut tets plus every tet with a vertex whose marched
/// distance is below the travel bound L*||w||inf*dt. Sorted ascending.
inline std::vector<int> compute_band(const NarrowBandState& state, const CutStrip& strip,
                                     double travel_bound) {
    const BackgroundMesh& mesh = *state.mesh;
    std::vector<uint8_t> in_band(mesh.num_tets(), 0);
    for (int t : strip.tets)
        in_band[t] = 1;
    for (int v = 0; v < mesh.num_vertices(); ++v)
        if (state.is_finished(v) && state.dist[v] < travel_bound)
            for (int t : mesh.tets_of_vertex(v))
                in_band[t] = 1;
    std::vector<int> band;
    for (int t = 0; t < mesh.num_tets(); ++t)
        if (in_band[t])
            band.push_back(t);
    return band;
}

} // namespace tracefem
