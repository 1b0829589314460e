#ifndef DGEA_PIPELINE_HPP
#define DGEA_PIPELINE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aggregation.hpp"
#include "dependency.hpp"
#include "errors.hpp"
#include "experts.hpp"
#include "gp_core.hpp"

namespace dgea {

    enum class OuterRule { gpoe, grbcm };

    inline std::string to_string(OuterRule r) { return r == OuterRule::gpoe ? "gpoe" : "grbcm"; }

    inline OuterRule parse_outer_rule(const std::string& s) {
        if (s == "gpoe" || s == "GPoE")
            return OuterRule::gpoe;
        if (s == "grbcm" || s == "GRBCM")
            return OuterRule::grbcm;
        detail::invalid("unknown outer aggregation '" + s + "' (expected gpoe|grbcm)");
    }

    /// Cluster count used when none is configured: max(2, round(M / 4)), capped at M.
    inline int default_cluster_count(int experts) {
        const int p = std::max(2, static_cast<int>(std::lround(static_cast<double>(experts) / 4.0)));
        return std::min(p, experts);
    }

    struct DgeaConfig {
        double lambda = 0.1;
        int clusters = 0; // 0: default_cluster_count(M)
        OuterRule outer = OuterRule::gpoe;
        int base_id = 0;
        std::uint64_t seed = 0;
        GlassoOptions glasso;
        SpectralOptions spectral;

        [[nodiscard]] int cluster_count(int experts) const { return clusters > 0 ? clusters : default_cluster_count(experts); }

        void validate(int experts) const {
            detail::require(lambda >= 0.0 && std::isfinite(lambda), "DGEA: lambda must be >= 0");
            detail::require(clusters >= 0, "DGEA: cluster count must be positive (or 0 for the default)");
            const int p = cluster_count(experts);
            detail::require(p >= 1 && p <= experts, "DGEA: need 1 <= P <= M");
            detail::require(base_id >= 0 && base_id < experts, "DGEA: base expert id out of range");
        }
    };

    /// Fused prediction of one cluster of dependent experts.
    struct ClusterExpert {
        int cluster_id = 0;
        std::vector<int> members;
        Vector means;
        Vector variances;
    };

    struct DgeaResult {
        AggregateResult aggregate; // weights_used is n_t x P (outer exponents per cluster expert)
        Matrix sample_cov;
        PrecisionEstimate precision;
        ClusterAssignment clusters;
        std::vector<ClusterExpert> cluster_experts;
    };

    /// Error raised inside one stage of the pipeline; `stage()` names it.
    class PipelineError : public std::runtime_error {
    public:
        PipelineError(std::string stage, const std::string& what)
            : std::runtime_error("DGEA stage '" + stage + "': " + what), stage_(std::move(stage)) {}
        [[nodiscard]] const std::string& stage() const { return stage_; }

    private:
        std::string stage_;
    };

    namespace detail {
        template <typename F>
        auto run_stage(const char* name, F&& f) {
            try {
                return f();
            } catch (const PipelineError&) {
                throw;
            } catch (const std::exception& e) {
                throw PipelineError(name, e.what());
            }
        }
    } // namespace detail

    /// GRBCM restricted to `members` plus the global base expert.
    ///
    /// A cluster holding only the base yields the base prediction; a single non-base member i yields the
    /// augmented expert on D_b union D_i. Members are fused in ascending id order, the first non-base member
    /// carrying weight 1. `base_prediction` may be passed in to avoid recomputing it per cluster.
    inline ClusterExpert cluster_fuse(const Dataset& data, const Partitioning& parts, std::vector<int> members,
                                      int base_id, const Hyperparams& theta, const Matrix& x_star, int cluster_id = 0,
                                      const std::optional<Prediction>& base_prediction = std::nullopt) {
        detail::require(!members.empty(), "cluster_fuse: cluster is empty");
        std::sort(members.begin(), members.end());
        members.erase(std::unique(members.begin(), members.end()), members.end());
        std::vector<int> non_base;
        for (int i : members)
            if (i != base_id)
                non_base.push_back(i);

        ClusterExpert out;
        out.cluster_id = cluster_id;
        out.members = members;
        const auto groups = parts.groups();
        detail::require(base_id >= 0 && base_id < parts.experts, "cluster_fuse: base id out of range");
        const std::vector<Index>& base_rows = groups[static_cast<std::size_t>(base_id)];

        Prediction base = base_prediction ? *base_prediction
                                          : predict_observation(PosteriorGP(data.subset(base_rows), theta), x_star);
        if (non_base.empty()) {
            out.means = base.mean;
            out.variances = base.variance;
            return out;
        }
        const auto k = static_cast<Index>(non_base.size());
        Matrix means(x_star.rows(), k);
        Matrix vars(x_star.rows(), k);
        for (Index j = 0; j < k; ++j) {
            const int id = non_base[static_cast<std::size_t>(j)];
            detail::require(id >= 0 && id < parts.experts, "cluster_fuse: member id out of range");
            const PosteriorGP aug(augmented_dataset(data, base_rows, groups[static_cast<std::size_t>(id)]), theta);
            const Prediction p = predict_observation(aug, x_star);
            means.col(j) = p.mean;
            vars.col(j) = p.variance;
        }
        if (k == 1) {
            out.means = means.col(0);
            out.variances = vars.col(0);
            return out;
        }
        const AggregateResult fused = grbcm_combine(base, means, vars, theta.prior_variance());
        out.means = fused.means;
        out.variances = fused.variances;
        return out;
    }

    /// Dependency-aware aggregation from already trained experts.
    ///
    /// `expert_means` is the n_t x M matrix of expert predictive means at `x_star`. When
    /// `probe_means` is given, the dependency structure is estimated from it instead.
    /// Steps: sample covariance, graphical lasso, spectral clustering, per-cluster GRBCM with the
    /// global base, outer GPoE (uniform 1/P) or GRBCM.
    inline DgeaResult dgea_predict(const Dataset& data, const Partitioning& parts, const Hyperparams& theta,
                                   const Matrix& x_star, const Matrix& expert_means, const DgeaConfig& cfg,
                                   const std::optional<Matrix>& probe_means = std::nullopt) {
        const int m = parts.experts;
        detail::require(m >= 2, "DGEA needs at least two experts");
        cfg.validate(m);
        detail::require(expert_means.cols() == m && expert_means.rows() == x_star.rows(),
                        "DGEA: expert prediction matrix must be n_t x M");
        const int p = cfg.cluster_count(m);

        DgeaResult res;
        const Matrix& dep_input = probe_means ? *probe_means : expert_means;
        res.sample_cov = detail::run_stage("sample_covariance", [&] { return sample_covariance(dep_input); });
        res.precision = detail::run_stage("graphical_lasso",
                                          [&] { return estimate_precision(res.sample_cov, cfg.lambda, cfg.glasso); });
        res.clusters = detail::run_stage("spectral_clustering", [&] {
            return spectral_clustering(res.precision.omega, p, cfg.seed, cfg.spectral);
        });

        const Prediction base = detail::run_stage("cluster_fuse", [&] {
            return predict_observation(PosteriorGP(data.subset(parts.indices_of(cfg.base_id)), theta), x_star);
        });
        for (int c = 0; c < p; ++c) {
            res.cluster_experts.push_back(detail::run_stage("cluster_fuse", [&] {
                return cluster_fuse(data, parts, res.clusters.members(c), cfg.base_id, theta, x_star, c, base);
            }));
        }

        res.aggregate = detail::run_stage("outer_aggregation", [&] {
            const Index nt = x_star.rows();
            if (cfg.outer == OuterRule::gpoe) {
                ExpertPredictions k;
                k.means.resize(nt, p);
                k.variances.resize(nt, p);
                k.prior_variances = Vector::Constant(p, theta.prior_variance());
                for (int c = 0; c < p; ++c) {
                    k.means.col(c) = res.cluster_experts[static_cast<std::size_t>(c)].means;
                    k.variances.col(c) = res.cluster_experts[static_cast<std::size_t>(c)].variances;
                }
                AggregateResult a = gpoe(k, WeightRule::uniform);
                a.method = "DGEA";
                return a;
            }
            Matrix means(nt, p);
            Matrix vars(nt, p);
            for (int c = 0; c < p; ++c) {
                means.col(c) = res.cluster_experts[static_cast<std::size_t>(c)].means;
                vars.col(c) = res.cluster_experts[static_cast<std::size_t>(c)].variances;
            }
            AggregateResult a = grbcm_combine(base, means, vars, theta.prior_variance(), "DGEA");
            a.weights_used.conservativeResize(nt, p); // drop the base-exponent column
            return a;
        });
        return res;
    }

    /// End-to-end: train experts on `parts`, predict at `x_star`, and aggregate with dependency detection.
    inline DgeaResult dgea_predict(const Dataset& data, const Partitioning& parts, const Matrix& x_star,
                                   const DgeaConfig& cfg, const TrainingConfig& training = {}) {
        detail::require(parts.experts >= 2, "DGEA needs at least two experts");
        cfg.validate(parts.experts);
        const ExpertEnsemble ens = detail::run_stage("train_experts", [&] { return train_experts(data, parts, training); });
        const ExpertPredictions preds = detail::run_stage("predict_experts", [&] { return predict_experts(ens, x_star); });
        return dgea_predict(data, parts, ens.experts[static_cast<std::size_t>(cfg.base_id)].hyperparams(), x_star, preds.means, cfg);
    }

} // namespace dgea

#endif
