#ifndef DGEA_EXPERTS_HPP
#define DGEA_EXPERTS_HPP

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "errors.hpp"
#include "gp_core.hpp"
#include "kmeans.hpp"

namespace dgea {

    enum class PartitionScheme { random, disjoint };

    inline std::string to_string(PartitionScheme s) { return s == PartitionScheme::random ? "random" : "disjoint"; }

    inline PartitionScheme parse_partition_scheme(const std::string& s) {
        if (s == "random")
            return PartitionScheme::random;
        if (s == "disjoint")
            return PartitionScheme::disjoint;
        detail::invalid("unknown partition scheme '" + s + "' (expected random|disjoint)");
    }

    struct Partitioning {
        std::vector<int> assignments; // expert index per training point
        int experts = 0;
        PartitionScheme scheme = PartitionScheme::random;
        std::uint64_t seed = 0;

        /// Row indices owned by `expert`, ascending.
        [[nodiscard]] std::vector<Index> indices_of(int expert) const {
            std::vector<Index> out;
            for (std::size_t i = 0; i < assignments.size(); ++i)
                if (assignments[i] == expert)
                    out.push_back(static_cast<Index>(i));
            return out;
        }

        [[nodiscard]] std::vector<std::vector<Index>> groups() const {
            std::vector<std::vector<Index>> out(static_cast<std::size_t>(experts));
            for (std::size_t i = 0; i < assignments.size(); ++i)
                out[static_cast<std::size_t>(assignments[i])].push_back(static_cast<Index>(i));
            return out;
        }
    };

    /// Random: seeded shuffle, then round-robin. Disjoint: k-means (k = M) on the inputs.
    inline Partitioning partition(const Dataset& data, int experts, PartitionScheme scheme, std::uint64_t seed) {
        const Index n = data.size();
        detail::require(experts >= 1, "partition: need at least one expert");
        detail::require(experts <= n, "partition: more experts than training points");
        Partitioning p;
        p.experts = experts;
        p.scheme = scheme;
        p.seed = seed;
        p.assignments.assign(static_cast<std::size_t>(n), 0);
        if (scheme == PartitionScheme::random) {
            std::vector<Index> order(static_cast<std::size_t>(n));
            std::iota(order.begin(), order.end(), Index{0});
            std::mt19937_64 rng(seed);
            std::shuffle(order.begin(), order.end(), rng);
            for (std::size_t pos = 0; pos < order.size(); ++pos)
                p.assignments[static_cast<std::size_t>(order[pos])] = static_cast<int>(pos % static_cast<std::size_t>(experts));
        } else {
            KMeansOptions opt;
            opt.k = experts;
            opt.max_iterations = 50;
            opt.restarts = 1;
            opt.seed = seed;
            p.assignments = kmeans(data.inputs, opt).labels;
        }
        return p;
    }

    struct TrainedExpert {
        int expert_id = 0;
        std::vector<Index> point_indices;
        PosteriorGP posterior;

        [[nodiscard]] const Hyperparams& hyperparams() const { return posterior.params(); }
    };

    enum class HyperparamMode { shared, independent };

    inline std::string to_string(HyperparamMode m) { return m == HyperparamMode::shared ? "shared" : "independent"; }

    inline HyperparamMode parse_hyperparam_mode(const std::string& s) {
        if (s == "shared")
            return HyperparamMode::shared;
        if (s == "independent")
            return HyperparamMode::independent;
        detail::invalid("unknown hyperparameter mode '" + s + "' (expected shared|independent)");
    }

    struct TrainingConfig {
        OptimizerConfig optimizer;
        HyperparamMode mode = HyperparamMode::shared;
        std::optional<Hyperparams> init; // default_hyperparams(data) when empty
        bool optimize = true;            // false: use init as-is
    };

    struct ExpertEnsemble {
        std::vector<TrainedExpert> experts;
        Hyperparams shared; // the shared fit (shared mode) or the common starting point (independent mode)
        double initial_objective = 0.0;
        double objective = 0.0;
        int iterations = 0;

        [[nodiscard]] std::size_t size() const { return experts.size(); }
        [[nodiscard]] const TrainedExpert& operator[](std::size_t i) const { return experts[i]; }
    };

    inline std::vector<Dataset> partition_datasets(const Dataset& data, const Partitioning& parts) {
        detail::require(static_cast<Index>(parts.assignments.size()) == data.size(),
                        "partitioning does not match dataset size");
        std::vector<Dataset> out;
        for (const auto& rows : parts.groups()) {
            detail::require(!rows.empty(), "partitioning has an empty expert");
            out.push_back(data.subset(rows));
        }
        return out;
    }

    /// Fit hyperparameters (one shared vector on the sum of per-partition marginal likelihoods, or one per
    /// expert) and build each expert's posterior on its own partition.
    inline ExpertEnsemble train_experts(const Dataset& data, const Partitioning& parts, const TrainingConfig& cfg = {}) {
        const std::vector<std::vector<Index>> groups = parts.groups();
        const std::vector<Dataset> subsets = partition_datasets(data, parts);
        const Hyperparams init = cfg.init ? *cfg.init : default_hyperparams(data);

        ExpertEnsemble ens;
        std::vector<Hyperparams> per_expert(subsets.size(), init);
        if (cfg.mode == HyperparamMode::shared) {
            if (cfg.optimize) {
                const FitResult fit = fit_factorized(subsets, init, cfg.optimizer);
                ens.shared = fit.params;
                ens.initial_objective = fit.initial_objective;
                ens.objective = fit.objective;
                ens.iterations = fit.iterations;
            } else {
                ens.shared = init;
                ens.initial_objective = ens.objective = factorized_log_likelihood(subsets, init, false).value;
            }
            std::fill(per_expert.begin(), per_expert.end(), ens.shared);
        } else {
            ens.shared = init;
            for (std::size_t i = 0; i < subsets.size(); ++i) {
                const std::span<const Dataset> one(&subsets[i], 1);
                if (cfg.optimize) {
                    const FitResult fit = fit_factorized(one, init, cfg.optimizer);
                    per_expert[i] = fit.params;
                    ens.initial_objective += fit.initial_objective;
                    ens.objective += fit.objective;
                    ens.iterations += fit.iterations;
                } else {
                    const double v = log_marginal_likelihood(subsets[i], init, false).value;
                    ens.initial_objective += v;
                    ens.objective += v;
                }
            }
        }
        ens.experts.reserve(subsets.size());
        for (std::size_t i = 0; i < subsets.size(); ++i)
            ens.experts.push_back(TrainedExpert{static_cast<int>(i), groups[i], PosteriorGP(subsets[i], per_expert[i])});
        return ens;
    }

    /// Per-expert predictive distributions of a noisy observation y* at every test input.
    struct ExpertPredictions {
        Matrix means;            // n_t x M
        Matrix variances;        // n_t x M, latent variance + noise variance
        Vector prior_variances;  // M, sigma_f^2 + sigma^2 of each expert

        [[nodiscard]] Index experts() const { return means.cols(); }
        [[nodiscard]] Index points() const { return means.rows(); }

        /// Common prior variance (mean over experts; all equal under shared hyperparameters).
        [[nodiscard]] double prior_variance() const { return prior_variances.mean(); }

        [[nodiscard]] ExpertPredictions select(const std::vector<int>& experts_kept) const {
            ExpertPredictions out;
            const auto k = static_cast<Index>(experts_kept.size());
            out.means.resize(points(), k);
            out.variances.resize(points(), k);
            out.prior_variances.resize(k);
            for (Index j = 0; j < k; ++j) {
                const int src = experts_kept[static_cast<std::size_t>(j)];
                out.means.col(j) = means.col(src);
                out.variances.col(j) = variances.col(src);
                out.prior_variances(j) = prior_variances(src);
            }
            return out;
        }
    };

    /// Noisy-observation prediction of a single posterior (latent variance + sigma^2).
    inline Prediction predict_observation(const PosteriorGP& gp, const Matrix& x_star) {
        Prediction p = gp.predict(x_star);
        p.variance.array() += gp.params().noise_variance();
        return p;
    }

    inline ExpertPredictions predict_experts(std::span<const TrainedExpert> experts, const Matrix& x_star) {
        detail::require(!experts.empty(), "predict_experts: no experts");
        const auto m = static_cast<Index>(experts.size());
        ExpertPredictions out;
        out.means.resize(x_star.rows(), m);
        out.variances.resize(x_star.rows(), m);
        out.prior_variances.resize(m);
        for (Index j = 0; j < m; ++j) {
            const PosteriorGP& gp = experts[static_cast<std::size_t>(j)].posterior;
            detail::require(gp.data().dim() == x_star.cols(), "predict_experts: test inputs have the wrong dimension");
            const Prediction p = predict_observation(gp, x_star);
            out.means.col(j) = p.mean;
            out.variances.col(j) = p.variance;
            out.prior_variances(j) = gp.params().prior_variance();
        }
        return out;
    }

    inline ExpertPredictions predict_experts(const ExpertEnsemble& ens, const Matrix& x_star) {
        return predict_experts(std::span<const TrainedExpert>(ens.experts), x_star);
    }

} // namespace dgea

#endif
