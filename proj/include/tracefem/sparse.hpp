#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tracefem {

/// Compressed-row square sparse matrix. Column indices are sorted and unique
/// within each row.
struct CsrMatrix {
    int n = 0;
    std::vector<int> row_ptr; // size n+1
    std::vector<int> col;
    std::vector<double> val;

    void matvec(const std::vector<double>& x, std::vector<double>& y) const {
        y.resize(n);
        for (int r = 0; r < n; ++r) {
            double s = 0.0;
            for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
                s += val[k] * x[col[k]];
            y[r] = s;
        }
    }

    double diagonal(int r) const {
        for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
            if (col[k] == r)
                return val[k];
        return 0.0;
    }

    /// Coordinate-format dump (row col value per line) for external studies.
    void write_triplets(std::ostream& os) const {
        for (int r = 0; r < n; ++r)
            for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
                os << r << ' ' << col[k] << ' ' << val[k] << '\n';
    }
};

inline double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v)
        s += x * x;
    return std::sqrt(s);
}

struct RescaledSystem {
    CsrMatrix matrix;
    std::vector<double> rhs;
    std::vector<double> scale; // D^{-1/2} entries

    /// Maps a solution of the rescaled system back to the original unknowns.
    std::vector<double> unscale(const std::vector<double>& y) const {
        std::vector<double> x(y.size());
        for (size_t i = 0; i < y.size(); ++i)
            x[i] = scale[i] * y[i];
        return x;
    }
};

/// Symmetric diagonal rescaling A -> D^{-1/2} A D^{-1/2} with D = diag(A).
/// Leaves unit diagonals and tames small-cut outliers in the spectrum.
/// Throws on a non-positive diagonal (assembly bug or a degree of freedom
/// with empty surface support).
inline RescaledSystem diagonal_rescale(const CsrMatrix& A, const std::vector<double>& b) {
    if (static_cast<int>(b.size()) != A.n)
        throw std::invalid_argument("diagonal_rescale: dimension mismatch");
    RescaledSystem out;
    out.scale.resize(A.n);
    for (int r = 0; r < A.n; ++r) {
        const double d = A.diagonal(r);
        if (!(d > 0.0))
            throw std::runtime_error("diagonal_rescale: non-positive diagonal at row " +
                                     std::to_string(r));
        out.scale[r] = 1.0 / std::sqrt(d);
    }
    out.matrix = A;
    for (int r = 0; r < A.n; ++r)
        for (int k = A.row_ptr[r]; k < A.row_ptr[r + 1]; ++k)
            out.matrix.val[k] = out.scale[r] * A.val[k] * out.scale[A.col[k]];
    out.rhs.resize(A.n);
    for (int r = 0; r < A.n; ++r)
        out.rhs[r] = out.scale[r] * b[r];
    return out;
}

/// One forward Gauss-Seidel sweep: solves (D+L) z = r.
class GaussSeidelPreconditioner {
public:
    explicit GaussSeidelPreconditioner(const CsrMatrix& A) : A_(&A), diag_(A.n) {
        for (int r = 0; r < A.n; ++r) {
            diag_[r] = A.diagonal(r);
            if (diag_[r] == 0.0)
                throw std::runtime_error("gauss_seidel: zero diagonal at row " +
                                         std::to_string(r));
        }
    }

    void apply(const std::vector<double>& r, std::vector<double>& z) const {
        const CsrMatrix& A = *A_;
        z.assign(A.n, 0.0);
        for (int i = 0; i < A.n; ++i) {
            double s = r[i];
            for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k) {
                const int j = A.col[k];
                if (j < i)
                    s -= A.val[k] * z[j];
            }
            z[i] = s / diag_[i];
        }
    }

private:
    const CsrMatrix* A_;
    std::vector<double> diag_;
};

struct GmresOptions {
    double rtol = 1e-6;
    int restart = 100;
    int max_iters = 2000;
};

struct GmresResult {
    std::vector<double> x;
    int iterations = 0;
    double rel_residual = 0.0;   // ||b - Ax|| / ||b||, recomputed from scratch at exit
    double estimate_drift = 0.0; // relative gap between the Givens-maintained estimate of
                                 // the preconditioned residual and its recomputed value;
                                 // monitors loss of orthogonality
    std::vector<double> history; // true relative residual at each outer check
};

/// Restarted GMRES, left-preconditioned by one forward Gauss-Seidel sweep.
/// The stopping test and the reported residual are on the unpreconditioned
/// residual ||b - Ax||, recomputed from the iterate; the inner Arnoldi
/// estimate is tightened until the true residual meets rtol.
inline GmresResult gmres_gs(const CsrMatrix& A, const std::vector<double>& b,
                            const GmresOptions& opts = {}) {
    if (static_cast<int>(b.size()) != A.n)
        throw std::invalid_argument("gmres_gs: dimension mismatch");
    const int n = A.n;
    GmresResult res;
    res.x.assign(n, 0.0);

    const double bnorm = norm2(b);
    if (bnorm == 0.0) {
        res.history.push_back(0.0);
        return res;
    }
    const double target = opts.rtol * bnorm;

    const GaussSeidelPreconditioner precond(A);
    std::vector<double> r(n), z(n), w(n);
    precond.apply(b, z);
    double inner_tol = opts.rtol * norm2(z);

    const int m = std::max(1, opts.restart);
    std::vector<std::vector<double>> V;
    std::vector<double> H(static_cast<size_t>(m + 1) * m, 0.0), cs(m), sn(m), g(m + 1);
    const auto h = [&](int i, int j) -> double& { return H[static_cast<size_t>(i) * m + j]; };

    while (true) {
        A.matvec(res.x, w);
        for (int i = 0; i < n; ++i)
            r[i] = b[i] - w[i];
        const double true_res = norm2(r);
        res.history.push_back(true_res / bnorm);
        if (true_res <= target) {
            res.rel_residual = true_res / bnorm;
            return res;
        }
        if (res.iterations >= opts.max_iters) {
            std::string hist;
            const size_t tail = res.history.size() > 8 ? res.history.size() - 8 : 0;
            for (size_t i = tail; i < res.history.size(); ++i)
                hist += " " + std::to_string(res.history[i]);
            throw std::runtime_error("gmres_gs: no convergence after " +
                                     std::to_string(res.iterations) +
                                     " iterations; relative residual history:" + hist);
        }

        precond.apply(r, z);
        const double beta = norm2(z);
        if (beta == 0.0)
            throw std::runtime_error("gmres_gs: preconditioned residual vanished while the "
                                     "true residual is above tolerance");

        V.assign(1, z);
        for (double& vi : V[0])
            vi /= beta;
        std::fill(g.begin(), g.end(), 0.0);
        g[0] = beta;

        int k = 0;
        while (k < m && res.iterations < opts.max_iters) {
            A.matvec(V[k], w);
            precond.apply(w, z);
            for (int i = 0; i <= k; ++i) { // modified Gram-Schmidt
                double hik = 0.0;
                for (int j = 0; j < n; ++j)
                    hik += z[j] * V[i][j];
                h(i, k) = hik;
                for (int j = 0; j < n; ++j)
                    z[j] -= hik * V[i][j];
            }
            const double hsub = norm2(z);
            h(k + 1, k) = hsub;
            if (hsub > 0.0) {
                V.push_back(z);
                for (double& vi : V.back())
                    vi /= hsub;
            }
            for (int i = 0; i < k; ++i) {
                const double t = cs[i] * h(i, k) + sn[i] * h(i + 1, k);
                h(i + 1, k) = -sn[i] * h(i, k) + cs[i] * h(i + 1, k);
                h(i, k) = t;
            }
            const double denom = std::hypot(h(k, k), h(k + 1, k));
            cs[k] = denom == 0.0 ? 1.0 : h(k, k) / denom;
            sn[k] = denom == 0.0 ? 0.0 : h(k + 1, k) / denom;
            h(k, k) = denom;
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            ++res.iterations;
            ++k;
            if (std::abs(g[k]) <= inner_tol || hsub == 0.0)
                break;
        }

        std::vector<double> y(k, 0.0);
        for (int i = k - 1; i >= 0; --i) {
            double s = g[i];
            for (int j = i + 1; j < k; ++j)
                s -= h(i, j) * y[j];
            y[i] = s / h(i, i);
        }
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < n; ++j)
                res.x[j] += y[i] * V[i][j];

        // Compare the maintained estimate |g_k| against the recomputed
        // preconditioned residual of the updated iterate.
        A.matvec(res.x, w);
        for (int i = 0; i < n; ++i)
            r[i] = b[i] - w[i];
        precond.apply(r, z);
        const double precond_res = norm2(z);
        const double denom_drift = std::max(precond_res, std::abs(g[k]));
        res.estimate_drift =
            denom_drift == 0.0 ? 0.0 : std::abs(precond_res - std::abs(g[k])) / denom_drift;

        if (norm2(r) > target)
            inner_tol = std::max(inner_tol * 0.25, 1e-3 * opts.rtol * precond_res);
    }
}

} // namespace tracefem
