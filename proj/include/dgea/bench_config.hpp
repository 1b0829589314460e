#ifndef DGEA_BENCH_CONFIG_HPP
#define DGEA_BENCH_CONFIG_HPP

#include <fstream>
#include <string>

#include <json.hpp>

#include "bench.hpp"

namespace dgea {

    /// BenchmarkSpec from a JSON document. Unknown keys are rejected.
    ///
    /// {
    ///   "dataset":  {"source": "toy", "n": 10000, "n_test": 1000}
    ///             | {"source": "csv", "train": "a.csv", "test": "b.csv", "target": "y"},
    ///   "experts": [10, 20, 50]          or  "points_per_expert": [200, 500],
    ///   "methods": ["PoE", "GPoE", "BCM", "RBCM", "GRBCM", "DGEA"],
    ///   "seeds": [1, 2, 3],
    ///   "partition": "random" | "disjoint",
    ///   "hyperparams": "shared" | "independent",
    ///   "optimizer": {"max_iterations": 100, "gradient_tolerance": 1e-6},
    ///   "grbcm_refit": false,
    ///   "dgea": {"lambda": 0.1, "clusters": 0, "outer": "gpoe", "base_expert": 0, "seed": 0},
    ///   "probe_split": 0.0,
    ///   "output": {"results": "r.csv", "report": "r.txt", "predictions": "p.csv", "graph": "g.txt"}
    /// }
    inline BenchmarkSpec parse_benchmark_spec(const nlohmann::json& j) {
        auto check_keys = [](const nlohmann::json& obj, std::initializer_list<const char*> allowed, const char* where) {
            detail::require(obj.is_object(), std::string(where) + " must be an object");
            for (auto it = obj.begin(); it != obj.end(); ++it) {
                bool ok = false;
                for (const char* a : allowed)
                    ok = ok || it.key() == a;
                detail::require(ok, std::string("unknown key '") + it.key() + "' in " + where);
            }
        };
        check_keys(j, {"dataset", "experts", "points_per_expert", "methods", "seeds", "partition", "hyperparams",
                       "optimizer", "grbcm_refit", "dgea", "probe_split", "output"},
                   "config");
        BenchmarkSpec spec;
        try {
            if (j.contains("dataset")) {
                const auto& d = j.at("dataset");
                check_keys(d, {"source", "n", "n_test", "train", "test", "target"}, "dataset");
                const std::string src = d.value("source", "toy");
                if (src == "toy") {
                    spec.source.kind = DataSource::Kind::toy;
                    spec.source.n = d.value("n", spec.source.n);
                    spec.source.n_test = d.value("n_test", spec.source.n_test);
                } else if (src == "csv") {
                    spec.source.kind = DataSource::Kind::csv;
                    spec.source.train_path = d.at("train").get<std::string>();
                    spec.source.test_path = d.at("test").get<std::string>();
                    spec.source.target = d.value("target", spec.source.target);
                } else {
                    detail::invalid("dataset.source must be 'toy' or 'csv'");
                }
            }
            if (j.contains("experts"))
                spec.expert_counts = j.at("experts").get<std::vector<int>>();
            if (j.contains("points_per_expert"))
                spec.points_per_expert = j.at("points_per_expert").get<std::vector<Index>>();
            if (j.contains("methods")) {
                spec.methods.clear();
                for (const auto& m : j.at("methods"))
                    spec.methods.push_back(parse_method(m.get<std::string>()));
            }
            if (j.contains("seeds"))
                spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
            if (j.contains("partition"))
                spec.scheme = parse_partition_scheme(j.at("partition").get<std::string>());
            if (j.contains("hyperparams"))
                spec.hyper_mode = parse_hyperparam_mode(j.at("hyperparams").get<std::string>());
            if (j.contains("optimizer")) {
                const auto& o = j.at("optimizer");
                check_keys(o, {"max_iterations", "gradient_tolerance"}, "optimizer");
                spec.optimizer.max_iterations = o.value("max_iterations", spec.optimizer.max_iterations);
                spec.optimizer.gradient_tolerance = o.value("gradient_tolerance", spec.optimizer.gradient_tolerance);
            }
            spec.grbcm_refit = j.value("grbcm_refit", false);
            if (j.contains("dgea")) {
                const auto& g = j.at("dgea");
                check_keys(g, {"lambda", "clusters", "outer", "base_expert", "seed"}, "dgea");
                spec.dgea.lambda = g.value("lambda", spec.dgea.lambda);
                spec.dgea.clusters = g.value("clusters", spec.dgea.clusters);
                if (g.contains("outer"))
                    spec.dgea.outer = parse_outer_rule(g.at("outer").get<std::string>());
                spec.dgea.base_id = g.value("base_expert", spec.dgea.base_id);
                spec.dgea.seed = g.value("seed", spec.dgea.seed);
            }
            spec.probe_split = j.value("probe_split", 0.0);
            if (j.contains("output")) {
                const auto& o = j.at("output");
                check_keys(o, {"results", "report", "predictions", "graph"}, "output");
                spec.results_csv = o.value("results", std::string{});
                spec.report_path = o.value("report", std::string{});
                spec.predictions_path = o.value("predictions", std::string{});
                spec.graph_path = o.value("graph", std::string{});
            }
        } catch (const nlohmann::json::exception& e) {
            throw InvalidArgument(std::string("bad benchmark config: ") + e.what());
        }
        spec.validate();
        return spec;
    }

    inline BenchmarkSpec load_benchmark_spec(const std::string& path) {
        std::ifstream in(path);
        if (!in)
            throw InvalidArgument("cannot open config file '" + path + "'");
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw InvalidArgument("config file '" + path + "' is not valid JSON: " + e.what());
        }
        return parse_benchmark_spec(j);
    }

} // namespace dgea

#endif
