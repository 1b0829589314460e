#ifndef DGEA_GP_CORE_HPP
#define DGEA_GP_CORE_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "optimize.hpp"

namespace dgea {

    /// SE-ARD hyperparameters, stored as logarithms for unconstrained optimization.
    ///
    /// Log-parameter layout: [log signal_variance, log L_1, ..., log L_D, log noise_variance].
    /// L_d divides the squared distance directly, so it plays the role of a squared length-scale.
    class Hyperparams {
    public:
        Hyperparams() = default;

        Hyperparams(double signal_variance, const Vector& length_scales, double noise_variance) {
            detail::require(signal_variance > 0.0 && std::isfinite(signal_variance), "signal variance must be positive");
            detail::require(noise_variance > 0.0 && std::isfinite(noise_variance), "noise variance must be positive");
            detail::require(length_scales.size() >= 1, "at least one length-scale required");
            detail::require((length_scales.array() > 0.0).all() && length_scales.allFinite(),
                            "length-scales must be positive");
            log_.resize(length_scales.size() + 2);
            log_(0) = std::log(signal_variance);
            log_.segment(1, length_scales.size()) = length_scales.array().log().matrix();
            log_(log_.size() - 1) = std::log(noise_variance);
        }

        static Hyperparams from_log(const Vector& log_params) {
            detail::require(log_params.size() >= 3, "log-parameter vector needs at least 3 entries");
            detail::require(log_params.allFinite(), "log-parameters must be finite");
            Hyperparams p;
            p.log_ = log_params;
            return p;
        }

        [[nodiscard]] Index dim() const { return log_.size() - 2; }
        [[nodiscard]] double signal_variance() const { return std::exp(log_(0)); }
        [[nodiscard]] double noise_variance() const { return std::exp(log_(log_.size() - 1)); }
        [[nodiscard]] double length_scale(Index d) const { return std::exp(log_(1 + d)); }
        [[nodiscard]] Vector length_scales() const { return log_.segment(1, dim()).array().exp().matrix(); }
        [[nodiscard]] const Vector& log_params() const { return log_; }

        /// Prior predictive variance of a noisy observation, sigma_f^2 + sigma^2.
        [[nodiscard]] double prior_variance() const { return signal_variance() + noise_variance(); }

        friend bool operator==(const Hyperparams& a, const Hyperparams& b) {
            return a.log_.size() == b.log_.size() && a.log_ == b.log_;
        }

    private:
        Vector log_;
    };

    struct NormStats {
        Vector input_mean;
        Vector input_std;
        double target_mean = 0.0;
        double target_std = 1.0;
    };

    struct Dataset {
        Matrix inputs;  // n x D
        Vector targets; // n
        std::optional<NormStats> norm_stats;

        Dataset() = default;
        Dataset(Matrix x, Vector y, std::optional<NormStats> stats = std::nullopt)
            : inputs(std::move(x)), targets(std::move(y)), norm_stats(std::move(stats)) {
            validate();
        }

        [[nodiscard]] Index size() const { return inputs.rows(); }
        [[nodiscard]] Index dim() const { return inputs.cols(); }

        void validate() const {
            detail::require(inputs.rows() >= 1 && inputs.cols() >= 1, "dataset needs n >= 1 and D >= 1");
            detail::require(targets.size() == inputs.rows(), "targets length must equal number of input rows");
            detail::require(inputs.allFinite() && targets.allFinite(), "dataset contains non-finite entries");
        }

        [[nodiscard]] Dataset subset(std::span<const Index> rows) const {
            detail::require(!rows.empty(), "subset must be nonempty");
            Matrix x(static_cast<Index>(rows.size()), dim());
            Vector y(static_cast<Index>(rows.size()));
            for (std::size_t i = 0; i < rows.size(); ++i) {
                detail::require(rows[i] >= 0 && rows[i] < size(), "subset index out of range");
                x.row(static_cast<Index>(i)) = inputs.row(rows[i]);
                y(static_cast<Index>(i)) = targets(rows[i]);
            }
            return Dataset(std::move(x), std::move(y), norm_stats);
        }
    };

    namespace detail {
        // Unbiased (n-1) standard deviation; 0 for n == 1.
        inline double sample_std(const Eigen::Ref<const Vector>& v, double mean) {
            if (v.size() < 2)
                return 0.0;
            return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
        }
    } // namespace detail

    /// Statistics that map `data` to zero mean / unit (n-1) standard deviation. Constant columns keep scale 1.
    inline NormStats compute_norm_stats(const Dataset& data) {
        NormStats s;
        const Index d = data.dim();
        s.input_mean.resize(d);
        s.input_std.resize(d);
        for (Index j = 0; j < d; ++j) {
            s.input_mean(j) = data.inputs.col(j).mean();
            const double sd = detail::sample_std(data.inputs.col(j), s.input_mean(j));
            s.input_std(j) = sd > 0.0 ? sd : 1.0;
        }
        s.target_mean = data.targets.mean();
        const double sd = detail::sample_std(data.targets, s.target_mean);
        s.target_std = sd > 0.0 ? sd : 1.0;
        return s;
    }

    inline Dataset apply_normalization(const Dataset& data, const NormStats& s) {
        detail::require(s.input_mean.size() == data.dim(), "normalization statistics have the wrong dimension");
        Matrix x = (data.inputs.rowwise() - s.input_mean.transpose()).array().rowwise() / s.input_std.transpose().array();
        Vector y = (data.targets.array() - s.target_mean) / s.target_std;
        return Dataset(std::move(x), std::move(y), s);
    }

    inline Dataset normalize(const Dataset& data) { return apply_normalization(data, compute_norm_stats(data)); }

    /// k(x, x') = sigma_f^2 exp(-1/2 sum_d (x_d - x'_d)^2 / L_d).
    inline Matrix kernel_matrix(const Matrix& x1, const Matrix& x2, const Hyperparams& params) {
        const Index d = params.dim();
        detail::require(x1.cols() == d && x2.cols() == d, "kernel_matrix: input dimension does not match length-scales");
        const double sf2 = params.signal_variance();
        const Vector inv_l = params.length_scales().cwiseInverse();
        detail::require(sf2 > 0.0 && std::isfinite(sf2) && inv_l.allFinite(), "kernel_matrix: non-positive parameters");

        Matrix k(x1.rows(), x2.rows());
        for (Index j = 0; j < x2.rows(); ++j) {
            for (Index i = 0; i < x1.rows(); ++i) {
                double acc = 0.0;
                for (Index c = 0; c < d; ++c) {
                    const double diff = x1(i, c) - x2(j, c);
                    acc += diff * diff * inv_l(c);
                }
                k(i, j) = sf2 * std::exp(-0.5 * acc);
            }
        }
        return k;
    }

    struct LmlResult {
        double value = 0.0;
        Vector gradient; // d value / d log-params; empty when not requested
        double jitter = 0.0;
    };

    /// log p(y | X, theta) for a zero-mean GP, with the gradient over log-parameters when asked for.
    inline LmlResult log_marginal_likelihood(const Dataset& data, const Hyperparams& params, bool with_gradient = true) {
        detail::require(data.size() >= 1, "log_marginal_likelihood: empty dataset");
        detail::require(data.dim() == params.dim(), "log_marginal_likelihood: dimension mismatch");
        const Index n = data.size();
        const Index d = params.dim();
        const double noise = params.noise_variance();

        const Matrix k = kernel_matrix(data.inputs, data.inputs, params);
        Matrix c = k;
        c.diagonal().array() += noise;
        CholeskyFactor chol = robust_cholesky(c);
        const Vector alpha = chol.llt.solve(data.targets);

        LmlResult out;
        out.jitter = chol.jitter;
        out.value = -0.5 * data.targets.dot(alpha) - 0.5 * chol.log_determinant() -
                    0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
        if (!with_gradient)
            return out;

        // W = alpha alpha^T - C^{-1}; dL/dtheta_j = 1/2 tr(W dC/dtheta_j).
        Matrix w = Matrix::Identity(n, n);
        chol.llt.solveInPlace(w);
        w = alpha * alpha.transpose() - w;

        out.gradient = Vector::Zero(d + 2);
        const Vector inv_l = params.length_scales().cwiseInverse();
        double g_sf = 0.0;
        Vector g_l = Vector::Zero(d);
        for (Index j = 0; j < n; ++j) {
            for (Index i = 0; i < n; ++i) {
                const double wk = w(i, j) * k(i, j);
                g_sf += wk;
                for (Index c2 = 0; c2 < d; ++c2) {
                    const double diff = data.inputs(i, c2) - data.inputs(j, c2);
                    g_l(c2) += wk * diff * diff;
                }
            }
        }
        out.gradient(0) = 0.5 * g_sf;
        out.gradient.segment(1, d) = (0.25 * g_l.array() * inv_l.array()).matrix();
        out.gradient(d + 1) = 0.5 * noise * w.trace();
        return out;
    }

    /// Sum of per-partition marginal likelihoods (shared parameters, block-diagonal covariance).
    inline LmlResult factorized_log_likelihood(std::span<const Dataset> parts, const Hyperparams& params,
                                               bool with_gradient = true) {
        detail::require(!parts.empty(), "factorized objective needs at least one partition");
        LmlResult total;
        if (with_gradient)
            total.gradient = Vector::Zero(params.log_params().size());
        for (const Dataset& part : parts) { // expert-index order keeps the sum reproducible
            const LmlResult r = log_marginal_likelihood(part, params, with_gradient);
            total.value += r.value;
            if (with_gradient)
                total.gradient += r.gradient;
            total.jitter = std::max(total.jitter, r.jitter);
        }
        return total;
    }

    /// Heuristic starting point: sigma_f^2 = var(y), L_d = (median pairwise |dx_d|)^2, sigma^2 = 0.01 var(y).
    /// The median is taken over at most `max_points` evenly strided rows.
    inline Hyperparams default_hyperparams(const Dataset& data, Index max_points = 1000) {
        const Index n = data.size();
        const double mean = data.targets.mean();
        double var = n > 1 ? (data.targets.array() - mean).square().sum() / static_cast<double>(n - 1) : 1.0;
        if (!(var > 0.0))
            var = 1.0;

        const Index stride = std::max<Index>(1, (n + max_points - 1) / max_points);
        std::vector<Index> rows;
        for (Index i = 0; i < n; i += stride)
            rows.push_back(i);

        Vector ls(data.dim());
        std::vector<double> dists;
        for (Index c = 0; c < data.dim(); ++c) {
            dists.clear();
            for (std::size_t a = 0; a < rows.size(); ++a)
                for (std::size_t b = a + 1; b < rows.size(); ++b)
                    dists.push_back(std::abs(data.inputs(rows[a], c) - data.inputs(rows[b], c)));
            double med = 1.0;
            if (!dists.empty()) {
                auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
                std::nth_element(dists.begin(), mid, dists.end());
                med = *mid;
            }
            if (!(med > 0.0))
                med = 1.0;
            ls(c) = med * med;
        }
        return Hyperparams(var, ls, 0.01 * var);
    }

    struct FitResult {
        Hyperparams params;
        double initial_objective = 0.0;
        double objective = 0.0;
        int iterations = 0;
        bool converged = false;
    };

    /// Maximize the factorized objective over shared log-parameters.
    inline FitResult fit_factorized(std::span<const Dataset> parts, const Hyperparams& init, const OptimizerConfig& cfg) {
        detail::require(!parts.empty(), "fit needs at least one partition");
        for (const Dataset& p : parts)
            detail::require(p.dim() == init.dim(), "initial hyperparameters do not match data dimension");
        auto objective = [&](const Vector& x, Vector* grad) {
            const LmlResult r = factorized_log_likelihood(parts, Hyperparams::from_log(x), grad != nullptr);
            if (grad)
                *grad = r.gradient;
            return r.value;
        };
        OptimizerResult opt = [&] {
            try {
                return bfgs_maximize(objective, init.log_params(), cfg);
            } catch (const NumericalError& e) {
                throw InvalidArgument(std::string("objective is not finite at the initial point: ") + e.what());
            }
        }();
        FitResult out;
        out.params = Hyperparams::from_log(opt.x);
        out.initial_objective = opt.initial_value;
        out.objective = opt.value;
        out.iterations = opt.iterations;
        out.converged = opt.converged;
        return out;
    }

    inline Hyperparams fit_hyperparams(const Dataset& data, const Hyperparams& init, const OptimizerConfig& cfg = {}) {
        return fit_factorized(std::span<const Dataset>(&data, 1), init, cfg).params;
    }

    struct Prediction {
        Vector mean;
        Vector variance;
    };

    /// Exact GP posterior over one dataset. Immutable after construction.
    class PosteriorGP {
    public:
        PosteriorGP(Dataset data, Hyperparams params) : data_(std::move(data)), params_(std::move(params)) {
            data_.validate();
            detail::require(data_.dim() == params_.dim(), "PosteriorGP: dimension mismatch");
            Matrix c = kernel_matrix(data_.inputs, data_.inputs, params_);
            c.diagonal().array() += params_.noise_variance();
            chol_ = robust_cholesky(c);
            alpha_ = chol_.llt.solve(data_.targets);
        }

        [[nodiscard]] const Dataset& data() const { return data_; }
        [[nodiscard]] const Hyperparams& params() const { return params_; }
        [[nodiscard]] Matrix chol_factor() const { return chol_.llt.matrixL(); }
        [[nodiscard]] const Vector& alpha() const { return alpha_; }
        [[nodiscard]] double jitter() const { return chol_.jitter; }

        /// Latent predictive mean and marginal variance (k_** - k_*^T C^{-1} k_*), clamped at 0.
        [[nodiscard]] Prediction predict(const Matrix& x_star) const {
            detail::require(x_star.cols() == data_.dim(), "gp_predict: test inputs have the wrong dimension");
            Matrix ks = kernel_matrix(data_.inputs, x_star, params_);
            Prediction out;
            out.mean = ks.transpose() * alpha_;
            chol_.llt.matrixL().solveInPlace(ks);
            out.variance = (params_.signal_variance() - ks.colwise().squaredNorm().array()).max(0.0).matrix();
            return out;
        }

    private:
        Dataset data_;
        Hyperparams params_;
        CholeskyFactor chol_;
        Vector alpha_;
    };

    inline Prediction gp_predict(const PosteriorGP& model, const Matrix& x_star) { return model.predict(x_star); }

} // namespace dgea

#endif
