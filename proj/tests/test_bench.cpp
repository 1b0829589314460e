#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dgea/bench_config.hpp"
#include "test_util.hpp"

using namespace dgea;

namespace {

    std::string temp_path(const std::string& name) {
        return (std::filesystem::temp_directory_path() / ("dgea_test_" + name)).string();
    }

    void write_text(const std::string& path, const std::string& text) {
        std::ofstream out(path);
        out << text;
    }

    BenchmarkSpec small_spec(std::vector<Method> methods, std::vector<std::uint64_t> seeds = {1}) {
        BenchmarkSpec s;
        s.source.kind = DataSource::Kind::toy;
        s.source.n = 500;
        s.source.n_test = 100;
        s.expert_counts = {5};
        s.methods = std::move(methods);
        s.seeds = std::move(seeds);
        s.optimizer.max_iterations = 30;
        return s;
    }

} // namespace

TEST(Smse, PerfectPredictionIsZero) {
    const Vector y = (Vector(4) << 1, 2, 3, 5).finished();
    EXPECT_EQ(smse(y, y), 0.0);
}

TEST(Smse, ConstantMeanPredictorOnFivePoints) {
    const Vector y = (Vector(5) << 1, -2, 0.5, 3, 4).finished();
    // Direct evaluation: mse = sum (y - ybar)^2 / 5, var = sum (y - ybar)^2 / 4.
    const Vector pred = Vector::Constant(5, y.mean());
    EXPECT_NEAR(smse(pred, y), 0.8, 1e-14);
}

TEST(Smse, ScaleInvariant) {
    const Vector y = (Vector(4) << 0.3, 1.2, -0.7, 2.0).finished();
    const Vector p = (Vector(4) << 0.1, 1.0, -0.2, 1.5).finished();
    EXPECT_NEAR(smse(p, y), smse(-3.5 * p, -3.5 * y), 1e-14);
}

TEST(Smse, RejectsDegenerateInput) {
    EXPECT_THROW(smse(Vector::Zero(3), Vector::Ones(3)), InvalidArgument);
    EXPECT_THROW(smse(Vector::Zero(1), Vector::Ones(1)), InvalidArgument);
    EXPECT_THROW(smse(Vector::Zero(2), Vector::Ones(3)), InvalidArgument);
}

TEST(Msll, TrivialPredictorScoresZero) {
    const Vector y = (Vector(3) << 0, 1, -1).finished();
    EXPECT_EQ(msll(Vector::Zero(3), Vector::Ones(3), y, 0.0, 1.0), 0.0);
    const Vector y2 = (Vector(4) << 0.2, 1.4, -3, 2).finished();
    EXPECT_NEAR(msll(Vector::Constant(4, 0.5), Vector::Constant(4, 2.0), y2, 0.5, 2.0), 0.0, 1e-15);
}

TEST(Msll, BetterThanTrivialIsNegative) {
    const Vector y = (Vector(3) << 0.9, 1.1, 1.0).finished();
    const double v = msll(y, Vector::Constant(3, 0.01), y, 0.0, 1.0);
    const double want = 0.5 * std::log(0.01) - (0.81 + 1.21 + 1.0) / 6.0;
    EXPECT_LT(v, 0.0);
    EXPECT_NEAR(v, want, 1e-14);
}

TEST(Msll, RejectsNonPositiveVariance) {
    EXPECT_THROW(msll(Vector::Zero(2), Vector::Zero(2), Vector::Zero(2), 0.0, 1.0), InvalidArgument);
    EXPECT_THROW(msll(Vector::Zero(2), Vector::Ones(2), Vector::Zero(2), 0.0, 0.0), InvalidArgument);
}

TEST(ToyData, FunctionAtZero) {
    // 5*0 + (-0.5) sin(-0.5) + 4 cos(0)
    EXPECT_NEAR(toy_function(0.0), 4.0 + 0.5 * std::sin(0.5), 1e-15);
    EXPECT_NEAR(toy_function(0.0), 4.2397127693021015, 1e-14); // sin(0.5) = 0.479425538604203
    EXPECT_NEAR(toy_function(1.0), 5.0 * std::sin(12.0) + 0.5 * std::sin(2.5) + 4.0 * std::cos(2.0), 1e-14);
}

TEST(ToyData, DeterministicAndNormalized) {
    const TrainTest a = gen_toy(300, 50, 7);
    const TrainTest b = gen_toy(300, 50, 7);
    EXPECT_EQ(a.train.inputs, b.train.inputs);
    EXPECT_EQ(a.train.targets, b.train.targets);
    EXPECT_EQ(a.test.inputs, b.test.inputs);
    EXPECT_NEAR(a.train.targets.mean(), 0.0, 1e-12);
    EXPECT_NEAR(detail::sample_std(a.train.targets, 0.0), 1.0, 1e-12);
    EXPECT_NE(gen_toy(300, 50, 8).train.targets, a.train.targets);
}

TEST(ToyData, RangesAndNoiseFreeTestTargets) {
    const TrainTest tt = gen_toy(2000, 500, 3);
    const NormStats& st = *tt.train.norm_stats;
    const Vector xtr = tt.train.inputs.col(0).array() * st.input_std(0) + st.input_mean(0);
    const Vector xte = tt.test.inputs.col(0).array() * st.input_std(0) + st.input_mean(0);
    EXPECT_GE(xtr.minCoeff(), 0.0);
    EXPECT_LE(xtr.maxCoeff(), 1.0);
    EXPECT_GE(xte.minCoeff(), -0.2);
    EXPECT_LE(xte.maxCoeff(), 1.2);
    EXPECT_LT(xte.minCoeff(), -0.1);
    EXPECT_GT(xte.maxCoeff(), 1.1);
    for (Index i = 0; i < 20; ++i)
        EXPECT_NEAR(tt.test.targets(i) * st.target_std + st.target_mean, toy_function(xte(i)), 1e-10);
    // Residual noise on training targets has the stated sd.
    double ss = 0.0;
    for (Index i = 0; i < tt.train.size(); ++i) {
        const double r = tt.train.targets(i) * st.target_std + st.target_mean - toy_function(xtr(i));
        ss += r * r;
    }
    EXPECT_NEAR(std::sqrt(ss / static_cast<double>(tt.train.size())), 0.2, 0.02);
}

TEST(ToyData, TestInputsIndependentOfTrainingSize) {
    const TrainTest a = gen_toy(100, 30, 5);
    const TrainTest b = gen_toy(900, 30, 5);
    const Vector xa = a.test.inputs.col(0).array() * a.train.norm_stats->input_std(0) + a.train.norm_stats->input_mean(0);
    const Vector xb = b.test.inputs.col(0).array() * b.train.norm_stats->input_std(0) + b.train.norm_stats->input_mean(0);
    EXPECT_LE((xa - xb).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Csv, SmokeParse) {
    const std::string p = temp_path("smoke.csv");
    write_text(p, "a,b,y\n1,2,3\n4,5,6\n");
    const Dataset d = load_csv(p, "y", false);
    EXPECT_EQ(d.size(), 2);
    EXPECT_EQ(d.dim(), 2);
    EXPECT_EQ(d.targets(1), 6.0);
    EXPECT_EQ(d.inputs(1, 0), 4.0);
    const Dataset mid = load_csv(p, "b", false);
    EXPECT_EQ(mid.inputs(0, 1), 3.0);
    EXPECT_EQ(mid.targets(0), 2.0);
    EXPECT_THROW(load_csv(p, "zzz", false), InvalidArgument);
    std::remove(p.c_str());
}

TEST(Csv, StringCellNamesRowAndColumn) {
    const std::string p = temp_path("bad.csv");
    write_text(p, "a,b,c,y\n1,1,1,1\n2,2,2,2\n3,3,3,3\n4,4,4,4\n5,5,5,5\n6,6,oops,6\n");
    try {
        (void)load_csv(p, "y", false);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.row(), 7u);
        EXPECT_EQ(e.column(), 3u);
        EXPECT_NE(std::string(e.what()).find("row 7, column 3"), std::string::npos);
    }
    write_text(p, "a,y\n1,\n");
    EXPECT_THROW(load_csv(p, "y", false), ParseError);
    write_text(p, "a,y\n1,2,3\n");
    EXPECT_THROW(load_csv(p, "y", false), ParseError);
    std::remove(p.c_str());
}

TEST(Csv, ConstantTargetCannotBeNormalized) {
    const std::string p = temp_path("const.csv");
    write_text(p, "x,y\n1,2\n2,2\n3,2\n");
    EXPECT_THROW(load_csv(p, "y", true), InvalidArgument);
    EXPECT_NO_THROW(load_csv(p, "y", false));
    std::remove(p.c_str());
}

TEST(Csv, RoundTrip) {
    const std::string p = temp_path("roundtrip.csv");
    const TrainTest tt = gen_toy(50, 5, 2);
    write_csv(tt.train, p);
    const Dataset back = load_csv(p, "y", false);
    EXPECT_LE((back.inputs - tt.train.inputs).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((back.targets - tt.train.targets).cwiseAbs().maxCoeff(), 1e-12);
    std::remove(p.c_str());
}

TEST(Csv, NormalizeStoresStats) {
    const std::string p = temp_path("norm.csv");
    write_text(p, "x,y\n1,10\n2,20\n3,40\n");
    const Dataset d = load_csv(p, "y", true);
    ASSERT_TRUE(d.norm_stats.has_value());
    EXPECT_NEAR(d.norm_stats->target_mean, 70.0 / 3.0, 1e-12);
    EXPECT_NEAR(d.targets.mean(), 0.0, 1e-12);
    std::remove(p.c_str());
}

TEST(MatrixText, RoundTrip) {
    const Matrix m = dgea::testing::random_spd(4, 3);
    std::stringstream ss;
    ss << "# header\n";
    write_matrix_text(ss, m);
    EXPECT_EQ(read_matrix_text(ss), m);
}

TEST(Methods, ParseAndPrint) {
    for (Method m : {Method::poe, Method::gpoe, Method::gpoe_entropy, Method::bcm, Method::rbcm, Method::grbcm, Method::dgea})
        EXPECT_EQ(parse_method(to_string(m)), m);
    EXPECT_EQ(parse_method("GPoE-uniform"), Method::gpoe);
    EXPECT_THROW(parse_method("NPAE"), InvalidArgument);
}

TEST(BenchmarkSpec, ResolvesExpertCounts) {
    BenchmarkSpec s;
    EXPECT_EQ(s.resolve_expert_counts(10000), (std::vector<int>{50, 40, 30, 20, 10}));
    s.points_per_expert = {200, 250, 330, 500, 1000};
    EXPECT_EQ(s.resolve_expert_counts(10000), (std::vector<int>{50, 40, 30, 20, 10}));
    EXPECT_EQ(s.resolve_expert_counts(2000), (std::vector<int>{10, 8, 6, 4, 2}));
    s.expert_counts = {3};
    EXPECT_EQ(s.resolve_expert_counts(2000), (std::vector<int>{3}));
}

TEST(BenchmarkSpec, ValidateRejectsEmptyLists) {
    BenchmarkSpec s;
    s.methods.clear();
    EXPECT_THROW(s.validate(), InvalidArgument);
    BenchmarkSpec t;
    t.seeds.clear();
    EXPECT_THROW(t.validate(), InvalidArgument);
}

TEST(BenchmarkConfig, ParsesJson) {
    const auto j = nlohmann::json::parse(R"({
        "dataset": {"source": "toy", "n": 800, "n_test": 80},
        "experts": [4, 8],
        "methods": ["PoE", "gpoe", "DGEA"],
        "seeds": [3, 4],
        "partition": "disjoint",
        "optimizer": {"max_iterations": 12},
        "dgea": {"lambda": 0.2, "clusters": 2, "outer": "grbcm"},
        "output": {"results": "out.csv"}
    })");
    const BenchmarkSpec s = parse_benchmark_spec(j);
    EXPECT_EQ(s.source.n, 800);
    EXPECT_EQ(s.source.n_test, 80);
    EXPECT_EQ(s.expert_counts, (std::vector<int>{4, 8}));
    EXPECT_EQ(s.methods, (std::vector<Method>{Method::poe, Method::gpoe, Method::dgea}));
    EXPECT_EQ(s.seeds, (std::vector<std::uint64_t>{3, 4}));
    EXPECT_EQ(s.scheme, PartitionScheme::disjoint);
    EXPECT_EQ(s.optimizer.max_iterations, 12);
    EXPECT_EQ(s.dgea.lambda, 0.2);
    EXPECT_EQ(s.dgea.clusters, 2);
    EXPECT_EQ(s.dgea.outer, OuterRule::grbcm);
    EXPECT_EQ(s.results_csv, "out.csv");
}

TEST(BenchmarkConfig, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(parse_benchmark_spec(nlohmann::json::parse(R"({"bogus": 1})")), InvalidArgument);
    EXPECT_THROW(parse_benchmark_spec(nlohmann::json::parse(R"({"dgea": {"lamda": 1}})")), InvalidArgument);
    EXPECT_THROW(parse_benchmark_spec(nlohmann::json::parse(R"({"methods": []})")), InvalidArgument);
    EXPECT_THROW(parse_benchmark_spec(nlohmann::json::parse(R"({"seeds": "one"})")), InvalidArgument);
    EXPECT_THROW(load_benchmark_spec(temp_path("does_not_exist.json")), InvalidArgument);
}

TEST(RunBenchmark, SingleMethodSmoke) {
    const BenchmarkResult r = run_benchmark(small_spec({Method::gpoe}));
    ASSERT_EQ(r.rows.size(), 1u);
    EXPECT_TRUE(r.rows[0].error.empty()) << r.rows[0].error;
    EXPECT_TRUE(std::isfinite(r.rows[0].smse));
    EXPECT_TRUE(std::isfinite(r.rows[0].msll));
    EXPECT_GE(r.rows[0].smse, 0.0);
    EXPECT_GE(r.rows[0].train_s, 0.0);
    EXPECT_GE(r.rows[0].predict_s, 0.0);
    EXPECT_FALSE(r.fingerprint.empty());
}

TEST(RunBenchmark, TwoSeedsTwoRowsPerMethod) {
    const BenchmarkResult r = run_benchmark(small_spec({Method::poe, Method::grbcm}, {1, 2}));
    ASSERT_EQ(r.rows.size(), 4u);
    EXPECT_EQ(r.rows[0].seed, 1u);
    EXPECT_EQ(r.rows[2].seed, 2u);
    EXPECT_EQ(r.rows[0].method, r.rows[2].method);
    EXPECT_NE(r.rows[0].smse, r.rows[2].smse);
}

TEST(RunBenchmark, PoeAndGpoeShareMean) {
    const BenchmarkResult r = run_benchmark(small_spec({Method::poe, Method::gpoe}));
    ASSERT_EQ(r.rows.size(), 2u);
    EXPECT_NEAR(r.rows[0].smse, r.rows[1].smse, 1e-12);
    EXPECT_NE(r.rows[0].msll, r.rows[1].msll);
}

TEST(RunBenchmark, AllMethodsDeterministic) {
    BenchmarkSpec s = small_spec(all_methods());
    s.dgea.clusters = 2;
    const BenchmarkResult a = run_benchmark(s);
    const BenchmarkResult b = run_benchmark(s);
    ASSERT_EQ(a.rows.size(), 6u);
    for (const auto& row : a.rows)
        EXPECT_TRUE(row.error.empty()) << row.method << ": " << row.error;
    EXPECT_EQ(metrics_fingerprint(a), metrics_fingerprint(b));
}

TEST(RunBenchmark, MethodFailureIsRecordedNotFatal) {
    BenchmarkSpec s = small_spec({Method::grbcm, Method::gpoe});
    s.expert_counts = {1};
    const BenchmarkResult r = run_benchmark(s);
    ASSERT_EQ(r.rows.size(), 2u);
    EXPECT_FALSE(r.rows[0].error.empty());
    EXPECT_TRUE(r.rows[1].error.empty());
}

TEST(RunBenchmark, CsvSourceAndOutputs) {
    const std::string tr = temp_path("train.csv"), te = temp_path("test.csv");
    const TrainTest tt = gen_toy(300, 60, 4);
    write_csv(tt.train, tr);
    write_csv(tt.test, te);
    BenchmarkSpec s = small_spec({Method::dgea, Method::rbcm});
    s.source.kind = DataSource::Kind::csv;
    s.source.train_path = tr;
    s.source.test_path = te;
    s.expert_counts = {4};
    s.predictions_path = "unused";
    s.graph_path = "unused";
    const BenchmarkResult r = run_benchmark(s);
    ASSERT_EQ(r.rows.size(), 2u);
    for (const auto& row : r.rows)
        EXPECT_TRUE(row.error.empty()) << row.error;
    ASSERT_EQ(r.graphs.size(), 1u);
    EXPECT_EQ(r.graphs[0].omega.rows(), 4);
    ASSERT_EQ(r.predictions.size(), 2u);
    EXPECT_EQ(r.predictions[0].means.size(), 60);

    std::ostringstream csv;
    write_results_csv(csv, r);
    std::istringstream lines(csv.str());
    std::string header;
    std::getline(lines, header);
    EXPECT_EQ(header, "method,seed,M,SMSE,MSLL,train_s,predict_s");
    int count = 0;
    for (std::string l; std::getline(lines, l);)
        ++count;
    EXPECT_EQ(count, 2);

    std::stringstream graph;
    write_graph_dump(graph, r);
    const Matrix parsed = read_matrix_text(graph);
    EXPECT_EQ(parsed.rows(), 5); // precision rows, then the labels row
    std::remove(tr.c_str());
    std::remove(te.c_str());
}

TEST(RunBenchmark, ProbeSplitOption) {
    BenchmarkSpec s = small_spec({Method::dgea});
    s.probe_split = 0.1;
    const BenchmarkResult r = run_benchmark(s);
    ASSERT_EQ(r.rows.size(), 1u);
    EXPECT_TRUE(r.rows[0].error.empty()) << r.rows[0].error;
    bool noted = false;
    for (const auto& n : r.notes)
        noted = noted || n.find("probe") != std::string::npos;
    EXPECT_TRUE(noted);
}

TEST(Summary, MediansOverSeeds) {
    BenchmarkResult r;
    for (int i = 0; i < 3; ++i) {
        BenchmarkRow row;
        row.method = "PoE";
        row.experts = 5;
        row.seed = static_cast<std::uint64_t>(i);
        row.smse = static_cast<double>(i * i);
        row.msll = -static_cast<double>(i);
        r.rows.push_back(row);
    }
    const auto s = summarize(r);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0].smse, 1.0);
    EXPECT_EQ(s[0].msll, -1.0);
    EXPECT_EQ(s[0].runs, 3u);
}
