#ifndef DGEA_DEPENDENCY_HPP
#define DGEA_DEPENDENCY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Eigenvalues>

#include "errors.hpp"
#include "kmeans.hpp"
#include "linalg.hpp"

namespace dgea {

    /// Column-centered sample covariance, 1/(n_t - 1) normalization. Columns are experts.
    inline Matrix sample_covariance(const Matrix& means) {
        detail::require(means.rows() >= 2, "sample_covariance: need at least two test points");
        const Matrix centered = means.rowwise() - means.colwise().mean();
        return (centered.transpose() * centered) / static_cast<double>(means.rows() - 1);
    }

    struct GlassoOptions {
        double tol = 1e-4;
        int max_iter = 100;
        int max_inner_iter = 1000;
    };

    struct PrecisionEstimate {
        Matrix omega;
        double lambda = 0.0;
        bool converged = false;
        int iterations = 0;
        double dual_gap = std::numeric_limits<double>::infinity();
        // log det W after each sweep; W is the working covariance estimate, the quantity the
        // block updates ascend.
        std::vector<double> dual_objective;
        Matrix covariance; // final working covariance W (approximately omega^{-1})
        bool diagonal_loaded = false; // fallback solve with penalized diagonal was used
    };

    namespace detail {

        inline double soft_threshold(double x, double t) {
            if (x > t)
                return x - t;
            if (x < -t)
                return x + t;
            return 0.0;
        }

        inline double log_det_spd(const Matrix& a) {
            Eigen::LLT<Matrix> llt(a);
            if (llt.info() != Eigen::Success)
                return -std::numeric_limits<double>::infinity();
            return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        }

        inline double mean_abs_offdiag(const Matrix& a) {
            const Index m = a.rows();
            if (m < 2)
                return 0.0;
            return (a.cwiseAbs().sum() - a.diagonal().cwiseAbs().sum()) / static_cast<double>(m * (m - 1));
        }

        inline Matrix drop_index(const Matrix& a, Index j) {
            const Index m = a.rows();
            Matrix out(m - 1, m - 1);
            for (Index c = 0, cc = 0; c < m; ++c) {
                if (c == j)
                    continue;
                for (Index r = 0, rr = 0; r < m; ++r) {
                    if (r == j)
                        continue;
                    out(rr++, cc) = a(r, c);
                }
                ++cc;
            }
            return out;
        }

    } // namespace detail

    namespace detail {

        // One block-coordinate-ascent solve. `diag_load` = false: unpenalized diagonal (W_ii = S_ii), started
        // from the dual-feasible point (1 - c) S + c diag(S) with c = min(1, lambda / max|S_ij|).
        // `diag_load` = true: penalized diagonal, W = S + lambda I throughout the diagonal.
        // Returns nothing if a column update loses positive definiteness.
        inline std::optional<PrecisionEstimate> glasso_solve(const Matrix& s, double lambda, const GlassoOptions& opt,
                                                             bool diag_load) {
            const Index m = s.rows();
            PrecisionEstimate res;
            res.lambda = lambda;
            res.diagonal_loaded = diag_load;
            Matrix w;
            if (diag_load) {
                w = s;
                w.diagonal().array() += lambda;
            } else {
                double max_off = 0.0;
                for (Index i = 0; i < m; ++i)
                    for (Index j = 0; j < m; ++j)
                        if (i != j)
                            max_off = std::max(max_off, std::abs(s(i, j)));
                const double c = max_off > 0.0 ? std::min(1.0, lambda / max_off) : 1.0;
                w = (1.0 - c) * s;
                w.diagonal() = s.diagonal();
            }
            Matrix beta = Matrix::Zero(m - 1, m); // column j: lasso coefficients for variable j
            const double scale = std::max(mean_abs_offdiag(s), 1e-300);
            const double threshold = opt.tol * scale;
            const double inner_tol = 1e-2 * threshold;

            for (int sweep = 0; sweep < opt.max_iter; ++sweep) {
                double change = 0.0;
                for (Index j = 0; j < m; ++j) {
                    const Matrix w11 = drop_index(w, j);
                    Vector s12(m - 1);
                    for (Index r = 0, rr = 0; r < m; ++r)
                        if (r != j)
                            s12(rr++) = s(r, j);

                    Vector b = beta.col(j);
                    Vector u = w11 * b; // u = W11 b, kept in sync with b
                    for (int it = 0; it < opt.max_inner_iter; ++it) {
                        double max_delta = 0.0;
                        for (Index k = 0; k < m - 1; ++k) {
                            const double partial = s12(k) - (u(k) - w11(k, k) * b(k));
                            const double nb = soft_threshold(partial, lambda) / w11(k, k);
                            const double delta = nb - b(k);
                            if (delta != 0.0) {
                                u += w11.col(k) * delta;
                                b(k) = nb;
                                max_delta = std::max(max_delta, std::abs(delta) * w11(k, k));
                            }
                        }
                        if (max_delta < inner_tol)
                            break;
                    }
                    // Schur complement of the updated W must stay positive.
                    const double schur = w(j, j) - u.dot(b);
                    if (!(schur > 0.0) || !u.allFinite())
                        return std::nullopt;
                    beta.col(j) = b;
                    for (Index r = 0, rr = 0; r < m; ++r) {
                        if (r == j)
                            continue;
                        change += std::abs(u(rr) - w(r, j));
                        w(r, j) = u(rr);
                        w(j, r) = u(rr);
                        ++rr;
                    }
                }
                res.iterations = sweep + 1;
                res.dual_objective.push_back(log_det_spd(w));
                if (change / static_cast<double>(m * (m - 1)) < threshold) {
                    res.converged = true;
                    break;
                }
            }

            // Recover Omega column by column from W and the lasso coefficients.
            Matrix omega = Matrix::Zero(m, m);
            for (Index j = 0; j < m; ++j) {
                Vector w12(m - 1);
                for (Index r = 0, rr = 0; r < m; ++r)
                    if (r != j)
                        w12(rr++) = w(r, j);
                const double theta_jj = 1.0 / (w(j, j) - w12.dot(beta.col(j)));
                omega(j, j) = theta_jj;
                for (Index r = 0, rr = 0; r < m; ++r)
                    if (r != j)
                        omega(r, j) = -beta(rr++, j) * theta_jj;
            }
            res.omega = 0.5 * (omega + omega.transpose());
            res.covariance = w;
            if (!res.omega.allFinite())
                return std::nullopt;

            const double ld_omega = log_det_spd(res.omega);
            double l1 = res.omega.cwiseAbs().sum();
            if (!diag_load)
                l1 -= res.omega.diagonal().cwiseAbs().sum();
            const double primal = ld_omega - (s.cwiseProduct(res.omega)).sum() - lambda * l1;
            const double dual = res.dual_objective.empty() ? log_det_spd(w) : res.dual_objective.back();
            res.dual_gap = std::isfinite(primal) ? (-dual - static_cast<double>(m)) - primal
                                                 : std::numeric_limits<double>::infinity();
            return res;
        }

    } // namespace detail

    /// L1-penalized Gaussian maximum likelihood: argmax log|Omega| - tr(S Omega) - lambda sum_{i!=j} |Omega_ij|.
    ///
    /// Block coordinate ascent over the columns of the working covariance W, each column solved as a lasso
    /// by coordinate descent. The diagonal is not penalized, so W_ii = S_ii throughout. If a sweep loses
    /// positive definiteness, the problem is re-solved with the diagonal loaded by lambda (W = S + lambda I,
    /// diagonal penalized) and `diagonal_loaded` is set.
    inline PrecisionEstimate graphical_lasso(const Matrix& s, double lambda, const GlassoOptions& opt = {}) {
        const Index m = s.rows();
        detail::require(m >= 1 && s.cols() == m, "graphical_lasso: S must be square");
        detail::require(lambda >= 0.0 && std::isfinite(lambda), "graphical_lasso: lambda must be >= 0");
        detail::require(s.allFinite() && (s - s.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, s.cwiseAbs().maxCoeff()),
                        "graphical_lasso: S must be symmetric");
        detail::require((s.diagonal().array() > 0.0).all(), "graphical_lasso: S must have a positive diagonal");
        if (lambda == 0.0) {
            Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
            detail::require(es.eigenvalues().minCoeff() > 1e-12 * es.eigenvalues().cwiseAbs().maxCoeff(),
                            "graphical_lasso: S is singular and lambda = 0");
        }

        if (m == 1) {
            PrecisionEstimate res;
            res.lambda = lambda;
            res.omega = Matrix::Constant(1, 1, 1.0 / s(0, 0));
            res.covariance = s;
            res.converged = true;
            res.dual_gap = 0.0;
            res.dual_objective.push_back(std::log(s(0, 0)));
            return res;
        }
        if (auto res = detail::glasso_solve(s, lambda, opt, false))
            return *res;
        if (lambda > 0.0)
            if (auto res = detail::glasso_solve(s, lambda, opt, true))
                return *res;
        throw NumericalError("graphical_lasso: working covariance lost positive definiteness");
    }

    /// Graphical lasso on the correlation matrix of S, mapped back to the scale of S, so that lambda is
    /// comparable across problems. Zero-variance variables become isolated nodes.
    inline PrecisionEstimate estimate_precision(const Matrix& s, double lambda, const GlassoOptions& opt = {}) {
        const Index m = s.rows();
        detail::require(m >= 1 && s.cols() == m, "estimate_precision: S must be square");
        const double max_var = std::max(s.diagonal().maxCoeff(), 0.0);
        const double floor = 1e-12 * (max_var > 0.0 ? max_var : 1.0);
        Vector sd(m);
        Matrix r(m, m);
        for (Index i = 0; i < m; ++i)
            sd(i) = std::sqrt(std::max(s(i, i), floor));
        for (Index j = 0; j < m; ++j)
            for (Index i = 0; i < m; ++i) {
                const bool degenerate = s(i, i) <= floor || s(j, j) <= floor;
                if (i == j)
                    r(i, j) = 1.0;
                else
                    r(i, j) = degenerate ? 0.0 : std::clamp(s(i, j) / (sd(i) * sd(j)), -1.0, 1.0);
            }
        r = 0.5 * (r + r.transpose());
        PrecisionEstimate est = graphical_lasso(r, lambda, opt);
        const Vector inv_sd = sd.cwiseInverse();
        est.omega = inv_sd.asDiagonal() * est.omega * inv_sd.asDiagonal();
        est.covariance = sd.asDiagonal() * est.covariance * sd.asDiagonal();
        return est;
    }

    /// Unnormalized graph Laplacian of the affinity |omega_ij| (i != j).
    inline Matrix build_laplacian(const Matrix& omega) {
        const Index m = omega.rows();
        detail::require(omega.cols() == m, "build_laplacian: omega must be square");
        detail::require((omega - omega.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, omega.cwiseAbs().maxCoeff()),
                        "build_laplacian: omega must be symmetric");
        Matrix a = omega.cwiseAbs();
        a.diagonal().setZero();
        a = 0.5 * (a + a.transpose());
        Matrix l = -a;
        l.diagonal() = a.rowwise().sum();
        return l;
    }

    struct ClusterAssignment {
        std::vector<int> labels; // cluster id per expert
        int clusters = 0;

        [[nodiscard]] std::vector<int> members(int c) const {
            std::vector<int> out;
            for (std::size_t i = 0; i < labels.size(); ++i)
                if (labels[i] == c)
                    out.push_back(static_cast<int>(i));
            return out;
        }
    };

    /// Renumber labels so that clusters appear in order of their smallest member.
    inline std::vector<int> canonical_labels(const std::vector<int>& labels) {
        std::map<int, int> remap;
        std::vector<int> out(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            auto [it, inserted] = remap.try_emplace(labels[i], static_cast<int>(remap.size()));
            out[i] = it->second;
        }
        return out;
    }

    struct SpectralOptions {
        int restarts = 20;
        int max_iterations = 100;
    };

    /// Cluster experts on the P smallest eigenvectors of the Laplacian of |omega|, rows normalized to unit
    /// length, with seeded k-means.
    inline ClusterAssignment spectral_clustering(const Matrix& omega, int clusters, std::uint64_t seed,
                                                 const SpectralOptions& opt = {}) {
        const Index m = omega.rows();
        detail::require(clusters >= 1 && clusters <= m, "spectral_clustering: need 1 <= P <= M");
        ClusterAssignment out;
        out.clusters = clusters;
        if (clusters == 1) {
            out.labels.assign(static_cast<std::size_t>(m), 0);
            return out;
        }
        const Matrix lap = build_laplacian(omega);
        Eigen::SelfAdjointEigenSolver<Matrix> es(lap);
        if (es.info() != Eigen::Success)
            throw NumericalError("spectral_clustering: eigendecomposition failed");
        Matrix emb = es.eigenvectors().leftCols(clusters);
        for (Index i = 0; i < m; ++i) {
            const double nrm = emb.row(i).norm();
            if (nrm > 0.0)
                emb.row(i) /= nrm;
        }
        KMeansOptions km;
        km.k = clusters;
        km.restarts = opt.restarts;
        km.max_iterations = opt.max_iterations;
        km.seed = seed;
        out.labels = canonical_labels(kmeans(emb, km).labels);
        return out;
    }

} // namespace dgea

#endif
