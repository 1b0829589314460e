#ifndef DGEA_AGGREGATION_HPP
#define DGEA_AGGREGATION_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "errors.hpp"
#include "experts.hpp"
#include "gp_core.hpp"

namespace dgea {

    struct AggregateResult {
        Vector means;
        Vector variances;
        std::string method;
        Matrix weights_used;              // n_t x M exponents applied to each expert density
        std::vector<Index> flagged;       // test points whose aggregate precision was <= 0 (prior substituted)

        [[nodiscard]] Index points() const { return means.size(); }
    };

    enum class WeightRule { uniform, entropy };

    namespace detail {

        inline void check_predictions(const ExpertPredictions& p) {
            require(p.experts() >= 1, "aggregation needs at least one expert");
            require(p.variances.rows() == p.means.rows() && p.variances.cols() == p.means.cols(),
                    "expert mean and variance matrices differ in shape");
            require(p.prior_variances.size() == p.experts(), "one prior variance per expert required");
            require((p.variances.array() > 0.0).all() && p.variances.allFinite(),
                    "expert variances must be positive and finite");
            require(p.means.allFinite(), "expert means must be finite");
        }

        /// Half the log-ratio of prior to posterior variance, floored at 0.
        inline double entropy_weight(double prior_var, double post_var) {
            return std::max(0.0, 0.5 * (std::log(prior_var) - std::log(post_var)));
        }

        inline Matrix entropy_weights(const ExpertPredictions& p) {
            Matrix w(p.points(), p.experts());
            for (Index j = 0; j < p.experts(); ++j)
                for (Index t = 0; t < p.points(); ++t)
                    w(t, j) = entropy_weight(p.prior_variances(j), p.variances(t, j));
            return w;
        }

        /// Weighted product of Gaussians, optionally divided by the prior raised to (sum beta - 1).
        inline AggregateResult weighted_product(const ExpertPredictions& p, Matrix weights, bool prior_correction,
                                                std::string method) {
            const Index nt = p.points();
            const double prior = p.prior_variance();
            AggregateResult out;
            out.method = std::move(method);
            out.means.resize(nt);
            out.variances.resize(nt);
            for (Index t = 0; t < nt; ++t) {
                double precision = 0.0;
                double weighted_mean = 0.0;
                double beta_sum = 0.0;
                for (Index j = 0; j < p.experts(); ++j) {
                    const double b = weights(t, j);
                    precision += b / p.variances(t, j);
                    weighted_mean += b * p.means(t, j) / p.variances(t, j);
                    beta_sum += b;
                }
                if (prior_correction)
                    precision += (1.0 - beta_sum) / prior; // zero prior mean adds nothing to the mean term
                if (!(precision > 0.0) || !std::isfinite(precision)) {
                    out.flagged.push_back(t);
                    out.means(t) = 0.0;
                    out.variances(t) = prior;
                    continue;
                }
                out.variances(t) = 1.0 / precision;
                out.means(t) = weighted_mean / precision;
            }
            out.weights_used = std::move(weights);
            return out;
        }

    } // namespace detail

    /// Product of experts: precisions add (beta_i = 1).
    inline AggregateResult poe(const ExpertPredictions& preds) {
        detail::check_predictions(preds);
        return detail::weighted_product(preds, Matrix::Ones(preds.points(), preds.experts()), false, "PoE");
    }

    /// Generalized product of experts with uniform (1/M) or differential-entropy weights.
    inline AggregateResult gpoe(const ExpertPredictions& preds, WeightRule rule = WeightRule::uniform) {
        detail::check_predictions(preds);
        if (rule == WeightRule::uniform) {
            const double b = 1.0 / static_cast<double>(preds.experts());
            return detail::weighted_product(preds, Matrix::Constant(preds.points(), preds.experts(), b), false, "GPoE");
        }
        return detail::weighted_product(preds, detail::entropy_weights(preds), false, "GPoE-entropy");
    }

    /// Bayesian committee machine: precisions add, (M - 1) prior precisions removed.
    inline AggregateResult bcm(const ExpertPredictions& preds) {
        detail::check_predictions(preds);
        return detail::weighted_product(preds, Matrix::Ones(preds.points(), preds.experts()), true, "BCM");
    }

    /// Robust BCM: entropy weights in both the precision sum and the prior correction.
    inline AggregateResult rbcm(const ExpertPredictions& preds) {
        detail::check_predictions(preds);
        return detail::weighted_product(preds, detail::entropy_weights(preds), true, "RBCM");
    }

    /// GRBCM fusion given the base expert's prediction and the augmented experts' predictions.
    ///
    /// Column 0 of the augmented matrices gets beta = 1; every later column gets
    /// beta = max(0, 1/2 (log var_base - log var_aug)). The base density carries exponent 1 - sum(beta).
    /// `weights_used` has one column per augmented expert followed by the base exponent.
    inline AggregateResult grbcm_combine(const Prediction& base, const Matrix& aug_means, const Matrix& aug_vars,
                                         double prior_variance, std::string method = "GRBCM") {
        const Index nt = base.mean.size();
        const Index k = aug_means.cols();
        detail::require(k >= 1, "grbcm_combine: need at least one augmented expert");
        detail::require(aug_means.rows() == nt && aug_vars.rows() == nt && aug_vars.cols() == k,
                        "grbcm_combine: shape mismatch");
        detail::require((base.variance.array() > 0.0).all() && (aug_vars.array() > 0.0).all(),
                        "grbcm_combine: variances must be positive");
        AggregateResult out;
        out.method = std::move(method);
        out.means.resize(nt);
        out.variances.resize(nt);
        out.weights_used.resize(nt, k + 1);
        for (Index t = 0; t < nt; ++t) {
            const double vb = base.variance(t);
            double precision = 0.0;
            double weighted_mean = 0.0;
            double beta_sum = 0.0;
            for (Index j = 0; j < k; ++j) {
                const double b = j == 0 ? 1.0 : detail::entropy_weight(vb, aug_vars(t, j));
                out.weights_used(t, j) = b;
                precision += b / aug_vars(t, j);
                weighted_mean += b * aug_means(t, j) / aug_vars(t, j);
                beta_sum += b;
            }
            const double base_exp = 1.0 - beta_sum;
            out.weights_used(t, k) = base_exp;
            precision += base_exp / vb;
            weighted_mean += base_exp * base.mean(t) / vb;
            if (!(precision > 0.0) || !std::isfinite(precision)) {
                out.flagged.push_back(t);
                out.means(t) = 0.0;
                out.variances(t) = prior_variance;
                continue;
            }
            out.variances(t) = 1.0 / precision;
            out.means(t) = weighted_mean / precision;
        }
        return out;
    }

    /// Base expert plus experts trained on D_b union D_i, all sharing one hyperparameter vector.
    struct AugmentedExperts {
        int base_id = 0;
        PosteriorGP base;
        std::vector<int> member_ids;          // non-base experts, in the order given
        std::vector<PosteriorGP> augmented;   // augmented[j] is trained on D_b followed by D_{member_ids[j]}
    };

    inline Dataset augmented_dataset(const Dataset& data, const std::vector<Index>& base_rows,
                                     const std::vector<Index>& member_rows) {
        std::vector<Index> rows = base_rows;
        rows.insert(rows.end(), member_rows.begin(), member_rows.end());
        return data.subset(rows);
    }

    /// Build the base posterior and one augmented posterior per member (members must exclude the base).
    inline AugmentedExperts build_augmented_experts(const Dataset& data, const Partitioning& parts,
                                                    const Hyperparams& theta, int base_id,
                                                    const std::vector<int>& members) {
        detail::require(base_id >= 0 && base_id < parts.experts, "base expert id out of range");
        const auto groups = parts.groups();
        const auto& base_rows = groups[static_cast<std::size_t>(base_id)];
        AugmentedExperts out{base_id, PosteriorGP(data.subset(base_rows), theta), members, {}};
        out.augmented.reserve(members.size());
        for (int i : members) {
            detail::require(i >= 0 && i < parts.experts && i != base_id, "augmented member id invalid");
            out.augmented.emplace_back(augmented_dataset(data, base_rows, groups[static_cast<std::size_t>(i)]), theta);
        }
        return out;
    }

    struct GrbcmOptions {
        int base_id = 0;
        // Refit the shared hyperparameters on the augmented factorized objective before prediction.
        bool refit = false;
        OptimizerConfig optimizer;
    };

    /// Shared hyperparameters refit on sum_i log p(y_bi | X_bi), starting from `theta`.
    inline Hyperparams refit_augmented(const Dataset& data, const Partitioning& parts, const Hyperparams& theta,
                                       int base_id, const OptimizerConfig& cfg) {
        const auto groups = parts.groups();
        std::vector<Dataset> sets;
        for (int i = 0; i < parts.experts; ++i)
            if (i != base_id)
                sets.push_back(augmented_dataset(data, groups[static_cast<std::size_t>(base_id)],
                                                 groups[static_cast<std::size_t>(i)]));
        return fit_factorized(sets, theta, cfg).params;
    }

    /// Predict with a set of augmented experts and fuse by GRBCM.
    inline AggregateResult grbcm_predict(const AugmentedExperts& ax, const Matrix& x_star, int total_experts,
                                         std::string method = "GRBCM") {
        const Prediction base = predict_observation(ax.base, x_star);
        if (ax.augmented.empty()) {
            AggregateResult out;
            out.method = std::move(method);
            out.means = base.mean;
            out.variances = base.variance;
            out.weights_used = Matrix::Zero(x_star.rows(), total_experts);
            out.weights_used.col(ax.base_id).setOnes();
            return out;
        }
        const auto k = static_cast<Index>(ax.augmented.size());
        Matrix means(x_star.rows(), k);
        Matrix vars(x_star.rows(), k);
        for (Index j = 0; j < k; ++j) {
            const Prediction p = predict_observation(ax.augmented[static_cast<std::size_t>(j)], x_star);
            means.col(j) = p.mean;
            vars.col(j) = p.variance;
        }
        AggregateResult fused = grbcm_combine(base, means, vars, ax.base.params().prior_variance(), std::move(method));
        // Scatter the per-augmented-expert exponents back into expert-id columns.
        Matrix w = Matrix::Zero(x_star.rows(), total_experts);
        for (Index j = 0; j < k; ++j)
            w.col(ax.member_ids[static_cast<std::size_t>(j)]) = fused.weights_used.col(j);
        w.col(ax.base_id) = fused.weights_used.col(k);
        fused.weights_used = std::move(w);
        return fused;
    }

    /// Generalized robust BCM over every partition, with `opts.base_id` as the communication expert.
    inline AggregateResult grbcm(const Dataset& data, const Partitioning& parts, const Hyperparams& theta,
                                 const Matrix& x_star, const GrbcmOptions& opts = {}) {
        detail::require(parts.experts >= 2, "GRBCM needs at least two experts");
        detail::require(opts.base_id >= 0 && opts.base_id < parts.experts, "base expert id out of range");
        const Hyperparams used = opts.refit ? refit_augmented(data, parts, theta, opts.base_id, opts.optimizer) : theta;
        std::vector<int> members;
        for (int i = 0; i < parts.experts; ++i)
            if (i != opts.base_id)
                members.push_back(i);
        const AugmentedExperts ax = build_augmented_experts(data, parts, used, opts.base_id, members);
        return grbcm_predict(ax, x_star, parts.experts);
    }

} // namespace dgea

#endif
