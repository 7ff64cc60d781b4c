#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tracefem/assembly.hpp"
#include "tracefem/fast_marching.hpp"
#include "tracefem/level_set.hpp"
#include "tracefem/mesh.hpp"
#include "tracefem/sparse.hpp"

namespace tracefem {

enum class TimeScheme { BDF1, BDF2 };

inline int history_depth(TimeScheme s) { return s == TimeScheme::BDF2 ? 2 : 1; }

/// Analytic problem data for a transport-diffusion run on an evolving
/// level-set surface. `exact` and `exact_gradient` are optional and enable
/// the per-step error norms.
struct TransientProblem {
    ScalarField phi;
    VectorField velocity;
    std::function<double(const Vec3&)> initial;
    ScalarField source;        // empty = 0
    ScalarField exact;         // empty = unknown
    VectorField exact_gradient;
};

struct TimeStepOptions {
    TimeScheme scheme = TimeScheme::BDF2;
    double dt = 0.0;
    int num_steps = 0;
    double nu = 1.0;
    GmresOptions solver;
};

struct StepDiagnostics {
    int n = 0;
    double t = 0.0;
    int active_dofs = 0;
    int band_dofs = 0;
    int solver_iterations = 0;
    double solver_residual = 0.0;
    double solver_drift = 0.0;
    double mass = 0.0;
    double err_l2 = std::numeric_limits<double>::quiet_NaN();
    double err_h1 = std::numeric_limits<double>::quiet_NaN();
};

struct ErrorReport {
    double err_l2l2 = std::numeric_limits<double>::quiet_NaN();
    double err_l2h1 = std::numeric_limits<double>::quiet_NaN();
};

/// Trapezoidal-in-time accumulation of the per-step surface norms:
/// half-weights at n = 0 and n = N, full weights in between.
inline ErrorReport accumulate_error_norms(const std::vector<StepDiagnostics>& steps, double dt) {
    ErrorReport rep;
    if (steps.empty() || std::isnan(steps.front().err_l2))
        return rep;
    double sum_l2 = 0.0, sum_h1 = 0.0;
    const size_t last = steps.size() - 1;
    for (size_t i = 0; i < steps.size(); ++i) {
        const double w = (i == 0 || i == last) ? 0.5 : 1.0;
        sum_l2 += w * dt * steps[i].err_l2 * steps[i].err_l2;
        sum_h1 += w * dt * steps[i].err_h1 * steps[i].err_h1;
    }
    rep.err_l2l2 = std::sqrt(sum_l2);
    rep.err_l2h1 = std::sqrt(sum_h1);
    return rep;
}

struct StepView {
    int n;
    double t;
    const SurfaceTriangulation* surface;
    const ActiveField* solution;
    const NarrowBandState* band;
};
using StepObserver = std::function<void(const StepView&)>;

/// Advances the surface PDE with BDF1/BDF2 on a fixed background mesh:
/// extract the surface, solve the trace FEM system against the extended
/// history fields, then extend the new solution over the narrow band.
class TimeIntegrator {
public:
    TimeIntegrator(const BackgroundMesh& mesh, TransientProblem problem, TimeStepOptions opts)
        : mesh_(&mesh), problem_(std::move(problem)), opts_(opts) {
        if (!(opts_.dt > 0.0))
            throw std::invalid_argument("TimeIntegrator: dt must be positive");
        initialize();
    }

    /// n = 0: nodal interpolant of the initial data on the active dofs,
    /// extended over the band like any later step.
    void initialize() {
        const double t0 = 0.0;
        const LevelSetField field = interpolate_levelset(problem_.phi, *mesh_, t0);
        surface_ = extract_surface(field);
        const CutStrip strip = cut_strip(field);
        solution_.dofs = build_dof_map(*mesh_, strip);
        solution_.values.resize(solution_.dofs.size());
        for (int i = 0; i < solution_.dofs.size(); ++i)
            solution_.values[i] = problem_.initial(mesh_->vertices[solution_.dofs.active[i]]);

        extend_solution(strip, t0);
        record_diagnostics(0, t0, strip, 0, 0.0, 0.0);
    }

    /// One implicit step to t_n = n*dt. BDF2 bootstraps its first step with
    /// BDF1; afterwards both history fields come from the extended bands.
    void advance() {
        const int n = static_cast<int>(steps_.size());
        const double t = n * opts_.dt;
        const LevelSetField field = interpolate_levelset(problem_.phi, *mesh_, t);
        surface_ = extract_surface(field);
        const CutStrip strip = cut_strip(field);
        const DofMap dofs = build_dof_map(*mesh_, strip);

        const bool bdf2 = opts_.scheme == TimeScheme::BDF2 && n >= 2;
        check_band_inclusion(strip, band_prev1_, n);
        if (bdf2)
            check_band_inclusion(strip, band_prev2_, n);

        const CsrMatrix M =
            assemble_surface_matrix(SurfaceOperator::Mass, surface_, *mesh_, strip, dofs);
        const CsrMatrix A = assemble_surface_matrix(SurfaceOperator::FullGradientStiffness,
                                                    surface_, *mesh_, strip, dofs);
        const CsrMatrix N = assemble_surface_matrix(SurfaceOperator::Convection, surface_,
                                                    *mesh_, strip, dofs, problem_.velocity, t);

        const double ct = (bdf2 ? 1.5 : 1.0) / opts_.dt;
        CsrMatrix B = M;
        for (size_t k = 0; k < B.val.size(); ++k)
            B.val[k] = ct * M.val[k] + opts_.nu * A.val[k] + N.val[k];

        // History term: the extended fields read at the new surface through
        // their P1 interpolants, which is exactly M times their restriction.
        std::vector<double> hist(dofs.size());
        for (int i = 0; i < dofs.size(); ++i) {
            const int v = dofs.active[i];
            hist[i] = bdf2 ? (4.0 * band_prev1_.u_ext[v] - band_prev2_.u_ext[v]) /
                                 (2.0 * opts_.dt)
                           : band_prev1_.u_ext[v] / opts_.dt;
        }
        std::vector<double> rhs;
        M.matvec(hist, rhs);
        if (problem_.source) {
            const std::vector<double> load =
                assemble_surface_load(problem_.source, surface_, *mesh_, dofs, t);
            for (int i = 0; i < dofs.size(); ++i)
                rhs[i] += load[i];
        }

        const RescaledSystem scaled = diagonal_rescale(B, rhs);
        const GmresResult sol = gmres_gs(scaled.matrix, scaled.rhs, opts_.solver);
        solution_.dofs = dofs;
        solution_.values = scaled.unscale(sol.x);

        extend_solution(strip, t);
        record_diagnostics(n, t, strip, sol.iterations, sol.rel_residual, sol.estimate_drift);
    }

    int steps_taken() const { return static_cast<int>(steps_.size()) - 1; }
    const std::vector<StepDiagnostics>& diagnostics() const { return steps_; }
    const SurfaceTriangulation& surface() const { return surface_; }
    const ActiveField& solution() const { return solution_; }
    const NarrowBandState& band() const { return band_prev1_; }
    const BackgroundMesh& mesh() const { return *mesh_; }

private:
    void check_band_inclusion(const CutStrip& strip, const NarrowBandState& band, int n) const {
        for (int v : strip.vertices)
            if (!band.is_finished(v))
                throw std::runtime_error(
                    "band inclusion violated at step " + std::to_string(n) + ": vertex " +
                    std::to_string(v) +
                    " of the new cut strip has no extended history value; "
                    "use a smaller dt or a larger band width L");
    }

    void extend_solution(const CutStrip& strip, double t) {
        double wmax = 0.0;
        for (int v : strip.vertices)
            wmax = std::max(wmax, norm(problem_.velocity(mesh_->vertices[v], t)));
        NarrowBandState band = init_band(surface_, *mesh_, solution_);
        band.stop_radius = mesh_->h + history_depth(opts_.scheme) * wmax * opts_.dt;
        march(band);
        band_prev2_ = std::move(band_prev1_);
        band_prev1_ = std::move(band);
    }

    void record_diagnostics(int n, double t, const CutStrip& strip, int iters, double resid,
                            double drift) {
        StepDiagnostics d;
        d.n = n;
        d.t = t;
        d.active_dofs = static_cast<int>(strip.vertices.size());
        d.band_dofs = band_prev1_.finished_count;
        d.solver_iterations = iters;
        d.solver_residual = resid;
        d.solver_drift = drift;
        d.mass = surface_integral(surface_, *mesh_, solution_);
        if (problem_.exact) {
            d.err_l2 = std::sqrt(l2_error_sq(surface_, *mesh_, solution_, problem_.exact, t));
            if (problem_.exact_gradient)
                d.err_h1 = std::sqrt(h1_tangential_error_sq(surface_, *mesh_, solution_,
                                                            problem_.exact_gradient, t));
        }
        steps_.push_back(d);
    }

    const BackgroundMesh* mesh_;
    TransientProblem problem_;
    TimeStepOptions opts_;

    SurfaceTriangulation surface_;
    ActiveField solution_;
    NarrowBandState band_prev1_; // band of the current step (read by step n+1)
    NarrowBandState band_prev2_; // one step older
    std::vector<StepDiagnostics> steps_;
};

struct TransientResult {
    std::vector<StepDiagnostics> steps;
    ErrorReport report;
};

/// Runs n = 1..num_steps on the uniform grid t_n = n*dt, emitting per-step
/// diagnostics and the trapezoidal error norms when an exact solution is
/// known. Any step failure is rethrown with the step index.
inline TransientResult run_transient(const BackgroundMesh& mesh, const TransientProblem& problem,
                                     const TimeStepOptions& opts,
                                     const StepObserver& observer = nullptr) {
    TimeIntegrator integrator(mesh, problem, opts);
    if (observer)
        observer({0, 0.0, &integrator.surface(), &integrator.solution(), &integrator.band()});
    for (int n = 1; n <= opts.num_steps; ++n) {
        try {
            integrator.advance();
        } catch (const std::exception& e) {
            throw std::runtime_error("run_transient: step " + std::to_string(n) + " (t = " +
                                     std::to_string(n * opts.dt) + ") failed: " + e.what());
        }
        if (observer)
            observer({n, n * opts.dt, &integrator.surface(), &integrator.solution(),
                      &integrator.band()});
    }
    TransientResult result;
    result.steps = integrator.diagnostics();
    result.report = accumulate_error_norms(result.steps, opts.dt);
    return result;
}

} // namespace tracefem
