// Benchmark driver: trains local GP experts and compares aggregation rules.
//
//   bench run --config spec.json
//   bench toy --n 10000 --experts 10,20,50 --methods PoE,GPoE,DGEA --seeds 1,2,3
//   bench csv --train train.csv --test test.csv --target y --experts 20 --clusters 5

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dgea/bench.hpp"
#include "dgea/bench_config.hpp"

namespace {

    struct CommonOptions {
        std::vector<int> experts;
        std::vector<long> points_per_expert;
        std::vector<std::string> methods;
        std::vector<std::uint64_t> seeds;
        double lambda = 0.1;
        int clusters = 0;
        std::string outer = "gpoe";
        int base_expert = 0;
        std::string partition = "random";
        std::string hyperparams = "shared";
        int max_iterations = 100;
        bool grbcm_refit = false;
    };

    struct OutputOptions {
        std::string results;
        std::string report;
        std::string dump_graph;
        std::string dump_predictions;
        double probe_split = -1.0;
    };

    void add_common(CLI::App* app, CommonOptions& o) {
        app->add_option("--experts", o.experts, "Expert counts M (comma separated)")->delimiter(',');
        app->add_option("--points-per-expert", o.points_per_expert, "Points per expert, converted to M = round(n / ppe)")
            ->delimiter(',');
        app->add_option("--methods", o.methods, "PoE,GPoE,GPoE-entropy,BCM,RBCM,GRBCM,DGEA")->delimiter(',');
        app->add_option("--seeds", o.seeds, "Seeds (comma separated)")->delimiter(',');
        app->add_option("--lambda", o.lambda, "Graphical lasso penalty")->check(CLI::NonNegativeNumber);
        app->add_option("--clusters", o.clusters, "DGEA cluster count P (0: max(2, round(M/4)))")
            ->check(CLI::NonNegativeNumber);
        app->add_option("--outer", o.outer, "DGEA outer aggregation: gpoe|grbcm");
        app->add_option("--base-expert", o.base_expert, "Communication expert id for GRBCM/DGEA");
        app->add_option("--partition", o.partition, "random|disjoint");
        app->add_option("--hyperparams", o.hyperparams, "shared|independent");
        app->add_option("--max-iter", o.max_iterations, "Hyperparameter optimizer iterations");
        app->add_flag("--grbcm-refit", o.grbcm_refit, "Refit hyperparameters on GRBCM's augmented datasets");
    }

    void add_outputs(CLI::App* app, OutputOptions& o) {
        app->add_option("--results", o.results, "Results CSV path");
        app->add_option("--report", o.report, "Text report path");
        app->add_option("--dump-graph", o.dump_graph, "Write DGEA precision matrices and cluster labels");
        app->add_option("--dump-predictions", o.dump_predictions, "Write per-test-point predictions CSV");
        app->add_option("--probe-split", o.probe_split,
                        "Extension: hold out this fraction of training inputs to estimate expert dependencies")
            ->check(CLI::Range(0.0, 0.99));
    }

    void apply_common(const CommonOptions& o, dgea::BenchmarkSpec& spec) {
        spec.expert_counts = o.experts;
        spec.points_per_expert.assign(o.points_per_expert.begin(), o.points_per_expert.end());
        if (!o.methods.empty()) {
            spec.methods.clear();
            for (const auto& m : o.methods)
                spec.methods.push_back(dgea::parse_method(m));
        }
        if (!o.seeds.empty())
            spec.seeds = o.seeds;
        spec.dgea.lambda = o.lambda;
        spec.dgea.clusters = o.clusters;
        spec.dgea.outer = dgea::parse_outer_rule(o.outer);
        spec.dgea.base_id = o.base_expert;
        spec.scheme = dgea::parse_partition_scheme(o.partition);
        spec.hyper_mode = dgea::parse_hyperparam_mode(o.hyperparams);
        spec.optimizer.max_iterations = o.max_iterations;
        spec.grbcm_refit = o.grbcm_refit;
    }

    void apply_outputs(const OutputOptions& o, dgea::BenchmarkSpec& spec) {
        if (!o.results.empty())
            spec.results_csv = o.results;
        if (!o.report.empty())
            spec.report_path = o.report;
        if (!o.dump_graph.empty())
            spec.graph_path = o.dump_graph;
        if (!o.dump_predictions.empty())
            spec.predictions_path = o.dump_predictions;
        if (o.probe_split >= 0.0)
            spec.probe_split = o.probe_split;
    }

    template <typename Writer>
    void write_file(const std::string& path, Writer&& w) {
        if (path.empty())
            return;
        std::ofstream out(path);
        if (!out)
            throw dgea::InvalidArgument("cannot write '" + path + "'");
        w(out);
    }

    int execute(dgea::BenchmarkSpec spec) {
        if (spec.results_csv.empty())
            spec.results_csv = "results.csv";
        spec.validate();
        const dgea::BenchmarkResult result = dgea::run_benchmark(spec);
        for (const auto& n : result.notes)
            std::cout << "note: " << n << "\n";
        dgea::write_summary_table(std::cout, result);
        write_file(spec.results_csv, [&](std::ostream& os) { dgea::write_results_csv(os, result); });
        write_file(spec.report_path, [&](std::ostream& os) { dgea::write_report(os, result); });
        write_file(spec.predictions_path, [&](std::ostream& os) { dgea::write_predictions_csv(os, result); });
        write_file(spec.graph_path, [&](std::ostream& os) { dgea::write_graph_dump(os, result); });
        std::size_t failures = 0;
        for (const auto& row : result.rows)
            if (!row.error.empty()) {
                ++failures;
                std::cerr << row.method << " seed=" << row.seed << " M=" << row.experts << ": " << row.error << "\n";
            }
        std::cout << "results written to " << spec.results_csv << "\n";
        return failures == 0 ? 0 : 2;
    }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Local Gaussian-process expert aggregation benchmark"};
    app.require_subcommand(1);

    std::string config_path;
    OutputOptions run_out;
    auto* run = app.add_subcommand("run", "Run a benchmark described by a JSON config file");
    run->add_option("--config", config_path, "Benchmark config (JSON)")->required()->check(CLI::ExistingFile);
    add_outputs(run, run_out);

    CommonOptions toy_opts;
    OutputOptions toy_out;
    long toy_n = 10000;
    long toy_nt = -1;
    auto* toy = app.add_subcommand("toy", "Benchmark on the 1-D analytic toy function");
    toy->add_option("--n", toy_n, "Training points")->check(CLI::PositiveNumber);
    toy->add_option("--n-test", toy_nt, "Test points (default n/10)");
    add_common(toy, toy_opts);
    add_outputs(toy, toy_out);

    CommonOptions csv_opts;
    OutputOptions csv_out;
    std::string train_path, test_path, target = "y";
    auto* csv = app.add_subcommand("csv", "Benchmark on user-supplied train/test CSV files");
    csv->add_option("--train", train_path, "Training CSV (header row)")->required()->check(CLI::ExistingFile);
    csv->add_option("--test", test_path, "Test CSV (same columns)")->required()->check(CLI::ExistingFile);
    csv->add_option("--target", target, "Target column name");
    add_common(csv, csv_opts);
    add_outputs(csv, csv_out);

    CLI11_PARSE(app, argc, argv);

    try {
        dgea::BenchmarkSpec spec;
        if (*run) {
            spec = dgea::load_benchmark_spec(config_path);
            apply_outputs(run_out, spec);
        } else if (*toy) {
            spec.source.kind = dgea::DataSource::Kind::toy;
            spec.source.n = toy_n;
            spec.source.n_test = toy_nt > 0 ? toy_nt : std::max<long>(2, toy_n / 10);
            apply_common(toy_opts, spec);
            apply_outputs(toy_out, spec);
        } else {
            spec.source.kind = dgea::DataSource::Kind::csv;
            spec.source.train_path = train_path;
            spec.source.test_path = test_path;
            spec.source.target = target;
            apply_common(csv_opts, spec);
            apply_outputs(csv_out, spec);
        }
        return execute(std::move(spec));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
