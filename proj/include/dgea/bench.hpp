#ifndef DGEA_BENCH_HPP
#define DGEA_BENCH_HPP

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <sys/utsname.h>

#include "aggregation.hpp"
#include "dependency.hpp"
#include "errors.hpp"
#include "experts.hpp"
#include "gp_core.hpp"
#include "pipeline.hpp"

namespace dgea {

    // ---------------------------------------------------------------- metrics

    /// Mean squared error over the (n-1)-normalized variance of the targets.
    inline double smse(const Vector& pred_mean, const Vector& y_true) {
        detail::require(pred_mean.size() == y_true.size(), "smse: length mismatch");
        detail::require(y_true.size() >= 2, "smse: need at least two test points");
        const double mean = y_true.mean();
        const double var = (y_true.array() - mean).square().sum() / static_cast<double>(y_true.size() - 1);
        detail::require(var > 0.0, "smse: targets have zero variance");
        const double mse = (pred_mean - y_true).squaredNorm() / static_cast<double>(y_true.size());
        return mse / var;
    }

    /// Mean negative log predictive density minus that of the Gaussian N(train_mean, train_var).
    inline double msll(const Vector& pred_mean, const Vector& pred_var, const Vector& y_true, double train_mean,
                       double train_var) {
        detail::require(pred_mean.size() == y_true.size() && pred_var.size() == y_true.size(), "msll: length mismatch");
        detail::require(y_true.size() >= 1, "msll: no test points");
        detail::require((pred_var.array() > 0.0).all(), "msll: predictive variances must be positive");
        detail::require(train_var > 0.0, "msll: training variance must be positive");
        const double two_pi = 2.0 * std::numbers::pi;
        double acc = 0.0;
        for (Index i = 0; i < y_true.size(); ++i) {
            const double r = y_true(i) - pred_mean(i);
            const double r0 = y_true(i) - train_mean;
            const double model = 0.5 * std::log(two_pi * pred_var(i)) + r * r / (2.0 * pred_var(i));
            const double trivial = 0.5 * std::log(two_pi * train_var) + r0 * r0 / (2.0 * train_var);
            acc += model - trivial;
        }
        return acc / static_cast<double>(y_true.size());
    }

    // ---------------------------------------------------------------- toy data

    /// 5x^2 sin(12x) + (x^3 - 0.5) sin(3x - 0.5) + 4 cos(2x).
    inline double toy_function(double x) {
        return 5.0 * x * x * std::sin(12.0 * x) + (x * x * x - 0.5) * std::sin(3.0 * x - 0.5) + 4.0 * std::cos(2.0 * x);
    }

    inline constexpr double toy_noise_sd = 0.2;
    inline constexpr double toy_test_lo = -0.2;
    inline constexpr double toy_test_hi = 1.2;

    struct TrainTest {
        Dataset train;
        Dataset test;
    };

    /// n noisy training points on [0, 1] and n_t noise-free test points on [-0.2, 1.2], both normalized with
    /// the training statistics. Train and test draws use separate seeded streams, so the test inputs for a
    /// given seed do not depend on n.
    inline TrainTest gen_toy(Index n, Index n_test, std::uint64_t seed) {
        detail::require(n >= 1 && n_test >= 1, "gen_toy: need n >= 1 and n_t >= 1");
        std::seed_seq train_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 1u};
        std::seed_seq test_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 2u};
        std::mt19937_64 train_rng(train_seq);
        std::mt19937_64 test_rng(test_seq);
        std::uniform_real_distribution<double> train_x(0.0, 1.0);
        std::uniform_real_distribution<double> test_x(toy_test_lo, toy_test_hi);
        std::normal_distribution<double> noise(0.0, toy_noise_sd);

        Matrix xtr(n, 1);
        Vector ytr(n);
        for (Index i = 0; i < n; ++i) {
            xtr(i, 0) = train_x(train_rng);
            ytr(i) = toy_function(xtr(i, 0)) + noise(train_rng);
        }
        Matrix xte(n_test, 1);
        Vector yte(n_test);
        for (Index i = 0; i < n_test; ++i) {
            xte(i, 0) = test_x(test_rng);
            yte(i) = toy_function(xte(i, 0));
        }
        const Dataset raw_train(std::move(xtr), std::move(ytr));
        const NormStats stats = compute_norm_stats(raw_train);
        return {apply_normalization(raw_train, stats), apply_normalization(Dataset(std::move(xte), std::move(yte)), stats)};
    }

    // ---------------------------------------------------------------- CSV

    struct CsvTable {
        std::vector<std::string> header;
        Matrix values;
    };

    namespace detail {
        inline std::string trim(const std::string& s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos)
                return {};
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        }

        inline std::vector<std::string> split_csv_line(const std::string& line) {
            std::vector<std::string> out;
            std::string cell;
            std::istringstream is(line);
            while (std::getline(is, cell, ','))
                out.push_back(trim(cell));
            if (!line.empty() && line.back() == ',')
                out.emplace_back();
            return out;
        }
    } // namespace detail

    /// Numeric CSV with one header row. Blank lines are skipped.
    inline CsvTable read_csv(const std::string& path) {
        std::ifstream in(path);
        if (!in)
            throw InvalidArgument("cannot open CSV file '" + path + "'");
        CsvTable t;
        std::string line;
        std::size_t row = 0;
        std::vector<std::vector<double>> rows;
        while (std::getline(in, line)) {
            ++row;
            if (detail::trim(line).empty())
                continue;
            auto cells = detail::split_csv_line(line);
            if (t.header.empty()) {
                t.header = std::move(cells);
                continue;
            }
            if (cells.size() != t.header.size())
                throw ParseError(path, row, std::min(cells.size(), t.header.size()) + 1,
                                 "expected " + std::to_string(t.header.size()) + " cells, found " +
                                     std::to_string(cells.size()));
            std::vector<double> vals(cells.size());
            for (std::size_t c = 0; c < cells.size(); ++c) {
                const std::string& cell = cells[c];
                if (cell.empty())
                    throw ParseError(path, row, c + 1, "missing value");
                double v = 0.0;
                const char* first = cell.data();
                const char* last = first + cell.size();
                if (*first == '+')
                    ++first;
                auto [ptr, ec] = std::from_chars(first, last, v);
                if (ec != std::errc() || ptr != last || !std::isfinite(v))
                    throw ParseError(path, row, c + 1, "non-numeric value '" + cell + "'");
                vals[c] = v;
            }
            rows.push_back(std::move(vals));
        }
        if (t.header.empty())
            throw ParseError(path, 1, 1, "missing header row");
        t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t c = 0; c < rows[r].size(); ++c)
                t.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
        return t;
    }

    /// Dataset from a CSV: the target column by name, every other column an input in header order.
    inline Dataset load_csv(const std::string& path, const std::string& target_column, bool normalize_data) {
        const CsvTable t = read_csv(path);
        const auto it = std::find(t.header.begin(), t.header.end(), target_column);
        if (it == t.header.end())
            throw InvalidArgument("CSV file '" + path + "' has no column named '" + target_column + "'");
        detail::require(t.values.rows() >= 1, "CSV file '" + path + "' has no data rows");
        detail::require(t.header.size() >= 2, "CSV file '" + path + "' needs at least one input column");
        const auto target = static_cast<Index>(it - t.header.begin());
        Matrix x(t.values.rows(), t.values.cols() - 1);
        for (Index c = 0, cc = 0; c < t.values.cols(); ++c)
            if (c != target)
                x.col(cc++) = t.values.col(c);
        Dataset d(std::move(x), t.values.col(target));
        if (!normalize_data)
            return d;
        if (d.size() < 2 || detail::sample_std(d.targets, d.targets.mean()) == 0.0)
            throw InvalidArgument("CSV file '" + path + "': target column is constant, cannot normalize");
        return normalize(d);
    }

    /// Inputs as x0..x{D-1} followed by the target, written with round-trip precision.
    inline void write_csv(const Dataset& d, const std::string& path, const std::string& target_column = "y") {
        std::ofstream out(path);
        if (!out)
            throw InvalidArgument("cannot write CSV file '" + path + "'");
        out << std::setprecision(17);
        for (Index c = 0; c < d.dim(); ++c)
            out << "x" << c << ",";
        out << target_column << "\n";
        for (Index i = 0; i < d.size(); ++i) {
            for (Index c = 0; c < d.dim(); ++c)
                out << d.inputs(i, c) << ",";
            out << d.targets(i) << "\n";
        }
    }

    /// One matrix row per line, entries space-separated.
    inline void write_matrix_text(std::ostream& out, const Matrix& m) {
        out << std::setprecision(17);
        for (Index r = 0; r < m.rows(); ++r) {
            for (Index c = 0; c < m.cols(); ++c)
                out << (c ? " " : "") << m(r, c);
            out << "\n";
        }
    }

    /// Inverse of write_matrix_text; lines starting with '#' and blank lines are ignored.
    inline Matrix read_matrix_text(std::istream& in) {
        std::vector<std::vector<double>> rows;
        std::string line;
        while (std::getline(in, line)) {
            if (detail::trim(line).empty() || line[0] == '#')
                continue;
            std::istringstream is(line);
            std::vector<double> row;
            double v = 0.0;
            while (is >> v)
                row.push_back(v);
            if (!rows.empty() && row.size() != rows.front().size())
                throw InvalidArgument("matrix text has ragged rows");
            rows.push_back(std::move(row));
        }
        Matrix m(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t c = 0; c < rows[r].size(); ++c)
                m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
        return m;
    }

    // ---------------------------------------------------------------- benchmark

    enum class Method { poe, gpoe, gpoe_entropy, bcm, rbcm, grbcm, dgea };

    inline std::string to_string(Method m) {
        switch (m) {
        case Method::poe: return "PoE";
        case Method::gpoe: return "GPoE";
        case Method::gpoe_entropy: return "GPoE-entropy";
        case Method::bcm: return "BCM";
        case Method::rbcm: return "RBCM";
        case Method::grbcm: return "GRBCM";
        case Method::dgea: return "DGEA";
        }
        return "?";
    }

    inline Method parse_method(std::string s) {
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (s == "poe") return Method::poe;
        if (s == "gpoe" || s == "gpoe-uniform") return Method::gpoe;
        if (s == "gpoe-entropy") return Method::gpoe_entropy;
        if (s == "bcm") return Method::bcm;
        if (s == "rbcm") return Method::rbcm;
        if (s == "grbcm") return Method::grbcm;
        if (s == "dgea") return Method::dgea;
        detail::invalid("unknown method '" + s + "'");
    }

    inline std::vector<Method> all_methods() {
        return {Method::poe, Method::gpoe, Method::bcm, Method::rbcm, Method::grbcm, Method::dgea};
    }

    /// Expert counts matching 200/250/330/500/1000 points per expert at n = 10^4.
    inline std::vector<int> default_expert_sweep() { return {50, 40, 30, 20, 10}; }

    struct DataSource {
        enum class Kind { toy, csv };
        Kind kind = Kind::toy;
        Index n = 10000;
        Index n_test = 1000;
        std::string train_path;
        std::string test_path;
        std::string target = "y";
    };

    struct BenchmarkSpec {
        DataSource source;
        std::vector<int> expert_counts;         // used when non-empty
        std::vector<Index> points_per_expert;   // converted to M = round(n / ppe) otherwise
        std::vector<Method> methods = all_methods();
        DgeaConfig dgea;                        // clusters == 0: default per M
        std::vector<std::uint64_t> seeds = {1};
        PartitionScheme scheme = PartitionScheme::random;
        HyperparamMode hyper_mode = HyperparamMode::shared;
        OptimizerConfig optimizer;
        bool grbcm_refit = false;
        double probe_split = 0.0; // fraction of training points held out to estimate dependencies (0: use test inputs)

        std::string results_csv;
        std::string report_path;
        std::string predictions_path;
        std::string graph_path;

        void validate() const {
            detail::require(!methods.empty(), "benchmark needs at least one method");
            detail::require(!seeds.empty(), "benchmark needs at least one seed");
            detail::require(probe_split >= 0.0 && probe_split < 1.0, "probe split must be in [0, 1)");
            for (int m : expert_counts)
                detail::require(m >= 1, "expert counts must be positive");
            for (Index p : points_per_expert)
                detail::require(p >= 1, "points per expert must be positive");
            if (source.kind == DataSource::Kind::toy)
                detail::require(source.n >= 2 && source.n_test >= 2, "toy benchmark needs n >= 2 and n_t >= 2");
            else
                detail::require(!source.train_path.empty() && !source.test_path.empty(),
                                "CSV benchmark needs train and test paths");
        }

        /// Expert counts for a training set of size n.
        [[nodiscard]] std::vector<int> resolve_expert_counts(Index n) const {
            std::vector<int> out;
            if (!expert_counts.empty())
                out = expert_counts;
            else if (!points_per_expert.empty())
                for (Index p : points_per_expert)
                    out.push_back(std::max(1, static_cast<int>(std::lround(static_cast<double>(n) / static_cast<double>(p)))));
            else
                out = default_expert_sweep();
            for (int& m : out)
                m = static_cast<int>(std::min<Index>(m, n));
            return out;
        }
    };

    struct BenchmarkRow {
        std::string method;
        std::uint64_t seed = 0;
        int experts = 0;
        double smse = std::numeric_limits<double>::quiet_NaN();
        double msll = std::numeric_limits<double>::quiet_NaN();
        double train_s = 0.0;
        double predict_s = 0.0;
        std::size_t flagged = 0;
        std::string error; // empty on success
    };

    struct PredictionDump {
        std::string method;
        std::uint64_t seed = 0;
        int experts = 0;
        Vector means;
        Vector variances;
    };

    struct GraphDump {
        std::uint64_t seed = 0;
        int experts = 0;
        double lambda = 0.0;
        Matrix omega;
        std::vector<int> labels;
    };

    struct BenchmarkResult {
        std::vector<BenchmarkRow> rows;
        std::vector<std::string> notes;
        std::string fingerprint;
        std::vector<PredictionDump> predictions; // filled when predictions_path is set
        std::vector<GraphDump> graphs;           // filled when graph_path is set
        std::map<std::uint64_t, Vector> test_targets;
    };

    inline std::string environment_fingerprint() {
        std::ostringstream os;
        utsname u{};
        if (uname(&u) == 0)
            os << u.sysname << " " << u.release << " " << u.machine << "; ";
#if defined(__clang__)
        os << "clang " << __clang_major__ << "." << __clang_minor__;
#elif defined(__GNUC__)
        os << "gcc " << __GNUC__ << "." << __GNUC_MINOR__;
#endif
        os << "; Eigen " << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "." << EIGEN_MINOR_VERSION;
#ifdef NDEBUG
        os << "; optimized";
#else
        os << "; debug";
#endif
        os << "; hardware threads " << std::thread::hardware_concurrency();
        return os.str();
    }

    namespace detail {
        class Stopwatch {
        public:
            Stopwatch() : start_(std::chrono::steady_clock::now()) {}
            [[nodiscard]] double seconds() const {
                return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
            }

        private:
            std::chrono::steady_clock::time_point start_;
        };

        inline bool uses_expert_predictions(Method m) { return m != Method::grbcm; }

        // Held-out probe inputs: a seeded random subset of size round(frac * n) removed from training.
        inline std::pair<Dataset, Matrix> split_probe(const Dataset& train, double frac, std::uint64_t seed) {
            const Index n = train.size();
            const auto n_probe = static_cast<Index>(std::lround(frac * static_cast<double>(n)));
            require(n_probe >= 2 && n_probe < n, "probe split leaves too few probe or training points");
            std::vector<Index> order(static_cast<std::size_t>(n));
            std::iota(order.begin(), order.end(), Index{0});
            std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
            std::shuffle(order.begin(), order.end(), rng);
            std::vector<Index> probe(order.begin(), order.begin() + n_probe);
            std::vector<Index> rest(order.begin() + n_probe, order.end());
            std::sort(probe.begin(), probe.end());
            std::sort(rest.begin(), rest.end());
            return {train.subset(rest), train.subset(probe).inputs};
        }
    } // namespace detail

    /// Run every (seed, M, method) combination. Per seed and M, experts are trained once and shared by all
    /// methods; GRBCM and DGEA additionally build augmented experts. A method that throws is recorded with
    /// its error and does not stop the others. Metrics are computed on normalized targets.
    inline BenchmarkResult run_benchmark(const BenchmarkSpec& spec) {
        spec.validate();
        BenchmarkResult result;
        result.fingerprint = environment_fingerprint();
        if (spec.source.kind == DataSource::Kind::toy)
            result.notes.push_back("toy test inputs drawn from [-0.2, 1.2] (the interval as printed, [-0.2,-1.2], is empty)");
        if (spec.probe_split > 0.0)
            result.notes.push_back("extension: DGEA dependencies estimated on a held-out probe split of the training inputs");
        result.notes.push_back("hyperparameters: " + to_string(spec.hyper_mode) + "; partitioning: " + to_string(spec.scheme) +
                               "; GRBCM augmented experts " + (spec.grbcm_refit ? "refit" : "reuse the shared fit"));

        std::optional<TrainTest> csv_data;
        if (spec.source.kind == DataSource::Kind::csv) {
            const Dataset raw_train = load_csv(spec.source.train_path, spec.source.target, false);
            const Dataset raw_test = load_csv(spec.source.test_path, spec.source.target, false);
            detail::require(raw_train.dim() == raw_test.dim(), "train and test CSVs have different input dimensions");
            if (raw_train.size() < 2 || detail::sample_std(raw_train.targets, raw_train.targets.mean()) == 0.0)
                throw InvalidArgument("training target is constant, cannot normalize");
            const NormStats stats = compute_norm_stats(raw_train);
            csv_data = TrainTest{apply_normalization(raw_train, stats), apply_normalization(raw_test, stats)};
        }

        for (const std::uint64_t seed : spec.seeds) {
            TrainTest tt = csv_data ? *csv_data : gen_toy(spec.source.n, spec.source.n_test, seed);
            std::optional<Matrix> probe_inputs;
            if (spec.probe_split > 0.0) {
                auto [rest, probe] = detail::split_probe(tt.train, spec.probe_split, seed);
                tt.train = std::move(rest);
                probe_inputs = std::move(probe);
            }
            const Dataset& train = tt.train;
            const Dataset& test = tt.test;
            result.test_targets[seed] = test.targets;
            const double train_mean = train.targets.mean();
            const double train_var = std::pow(detail::sample_std(train.targets, train_mean), 2);

            for (const int m : spec.resolve_expert_counts(train.size())) {
                auto record_failure = [&](const std::string& what) {
                    for (Method meth : spec.methods) {
                        BenchmarkRow row;
                        row.method = to_string(meth);
                        row.seed = seed;
                        row.experts = m;
                        row.error = what;
                        result.rows.push_back(std::move(row));
                    }
                };

                const Partitioning parts = partition(train, m, spec.scheme, seed);
                TrainingConfig tcfg;
                tcfg.optimizer = spec.optimizer;
                tcfg.mode = spec.hyper_mode;
                std::optional<ExpertEnsemble> ens;
                double shared_train_s = 0.0;
                try {
                    detail::Stopwatch sw;
                    ens = train_experts(train, parts, tcfg);
                    shared_train_s = sw.seconds();
                } catch (const std::exception& e) {
                    record_failure(std::string("expert training failed: ") + e.what());
                    continue;
                }
                const Hyperparams theta = ens->experts[static_cast<std::size_t>(
                                                           std::clamp(spec.dgea.base_id, 0, m - 1))].hyperparams();

                std::optional<ExpertPredictions> preds;
                double shared_predict_s = 0.0;
                const bool need_preds = std::any_of(spec.methods.begin(), spec.methods.end(), detail::uses_expert_predictions);
                if (need_preds) {
                    try {
                        detail::Stopwatch sw;
                        preds = predict_experts(*ens, test.inputs);
                        shared_predict_s = sw.seconds();
                    } catch (const std::exception& e) {
                        record_failure(std::string("expert prediction failed: ") + e.what());
                        continue;
                    }
                }

                for (const Method meth : spec.methods) {
                    BenchmarkRow row;
                    row.method = to_string(meth);
                    row.seed = seed;
                    row.experts = m;
                    try {
                        AggregateResult agg;
                        double extra_train = 0.0;
                        double extra_predict = 0.0;
                        switch (meth) {
                        case Method::poe:
                        case Method::gpoe:
                        case Method::gpoe_entropy:
                        case Method::bcm:
                        case Method::rbcm: {
                            detail::Stopwatch sw;
                            if (meth == Method::poe) agg = poe(*preds);
                            else if (meth == Method::gpoe) agg = gpoe(*preds, WeightRule::uniform);
                            else if (meth == Method::gpoe_entropy) agg = gpoe(*preds, WeightRule::entropy);
                            else if (meth == Method::bcm) agg = bcm(*preds);
                            else agg = rbcm(*preds);
                            extra_predict = sw.seconds();
                            row.train_s = shared_train_s;
                            row.predict_s = shared_predict_s + extra_predict;
                            break;
                        }
                        case Method::grbcm: {
                            detail::require(m >= 2, "GRBCM needs at least two experts");
                            const int base_id = std::clamp(spec.dgea.base_id, 0, m - 1);
                            detail::Stopwatch sw_train;
                            const Hyperparams used =
                                spec.grbcm_refit ? refit_augmented(train, parts, theta, base_id, spec.optimizer) : theta;
                            std::vector<int> members;
                            for (int i = 0; i < m; ++i)
                                if (i != base_id)
                                    members.push_back(i);
                            const AugmentedExperts ax = build_augmented_experts(train, parts, used, base_id, members);
                            extra_train = sw_train.seconds();
                            detail::Stopwatch sw_pred;
                            agg = grbcm_predict(ax, test.inputs, m);
                            extra_predict = sw_pred.seconds();
                            row.train_s = shared_train_s + extra_train;
                            row.predict_s = extra_predict;
                            break;
                        }
                        case Method::dgea: {
                            DgeaConfig cfg = spec.dgea;
                            cfg.seed = spec.dgea.seed ^ seed;
                            cfg.clusters = spec.dgea.clusters > 0 ? std::min(spec.dgea.clusters, m) : 0;
                            std::optional<Matrix> probe_means;
                            detail::Stopwatch sw;
                            if (probe_inputs)
                                probe_means = predict_experts(*ens, *probe_inputs).means;
                            DgeaResult dr = dgea_predict(train, parts, theta, test.inputs, preds->means, cfg, probe_means);
                            extra_predict = sw.seconds();
                            if (!spec.graph_path.empty())
                                result.graphs.push_back({seed, m, cfg.lambda, dr.precision.omega, dr.clusters.labels});
                            agg = std::move(dr.aggregate);
                            row.train_s = shared_train_s;
                            row.predict_s = shared_predict_s + extra_predict;
                            break;
                        }
                        }
                        row.flagged = agg.flagged.size();
                        row.smse = smse(agg.means, test.targets);
                        row.msll = msll(agg.means, agg.variances, test.targets, train_mean, train_var);
                        if (!spec.predictions_path.empty())
                            result.predictions.push_back({row.method, seed, m, agg.means, agg.variances});
                    } catch (const std::exception& e) {
                        row.error = e.what();
                    }
                    result.rows.push_back(std::move(row));
                }
            }
        }
        return result;
    }

    // ---------------------------------------------------------------- reporting

    inline constexpr const char* results_csv_header = "method,seed,M,SMSE,MSLL,train_s,predict_s";

    namespace detail {
        inline std::string fmt_double(double v) {
            if (std::isnan(v))
                return "nan";
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g", v);
            return buf;
        }

        inline double median(std::vector<double> v) {
            v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return std::isnan(x); }), v.end());
            if (v.empty())
                return std::numeric_limits<double>::quiet_NaN();
            std::sort(v.begin(), v.end());
            const std::size_t h = v.size() / 2;
            return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
        }
    } // namespace detail

    inline void write_results_csv(std::ostream& out, const BenchmarkResult& r) {
        out << results_csv_header << "\n";
        for (const BenchmarkRow& row : r.rows)
            out << row.method << "," << row.seed << "," << row.experts << "," << detail::fmt_double(row.smse) << ","
                << detail::fmt_double(row.msll) << "," << detail::fmt_double(row.train_s) << ","
                << detail::fmt_double(row.predict_s) << "\n";
    }

    /// Metric columns only (no timings): identical specs must give identical text.
    inline std::string metrics_fingerprint(const BenchmarkResult& r) {
        std::ostringstream os;
        for (const BenchmarkRow& row : r.rows)
            os << row.method << "," << row.seed << "," << row.experts << "," << detail::fmt_double(row.smse) << ","
               << detail::fmt_double(row.msll) << "," << row.flagged << "," << row.error << "\n";
        return os.str();
    }

    struct SummaryEntry {
        std::string method;
        int experts = 0;
        double smse = 0.0;
        double msll = 0.0;
        double train_s = 0.0;
        double predict_s = 0.0;
        std::size_t runs = 0;
        std::size_t failures = 0;
    };

    /// Medians over seeds, per (M, method), in first-seen order.
    inline std::vector<SummaryEntry> summarize(const BenchmarkResult& r) {
        std::vector<SummaryEntry> out;
        std::vector<std::pair<int, std::string>> keys;
        for (const auto& row : r.rows) {
            const auto key = std::make_pair(row.experts, row.method);
            if (std::find(keys.begin(), keys.end(), key) == keys.end())
                keys.push_back(key);
        }
        for (const auto& [m, meth] : keys) {
            std::vector<double> s, l, tr, pr;
            SummaryEntry e;
            e.method = meth;
            e.experts = m;
            for (const auto& row : r.rows) {
                if (row.experts != m || row.method != meth)
                    continue;
                ++e.runs;
                if (!row.error.empty()) {
                    ++e.failures;
                    continue;
                }
                s.push_back(row.smse);
                l.push_back(row.msll);
                tr.push_back(row.train_s);
                pr.push_back(row.predict_s);
            }
            e.smse = detail::median(s);
            e.msll = detail::median(l);
            e.train_s = detail::median(tr);
            e.predict_s = detail::median(pr);
            out.push_back(e);
        }
        return out;
    }

    inline void write_summary_table(std::ostream& out, const BenchmarkResult& r) {
        out << std::left << std::setw(6) << "M" << std::setw(14) << "method" << std::right << std::setw(12) << "SMSE"
            << std::setw(12) << "MSLL" << std::setw(11) << "train_s" << std::setw(11) << "predict_s" << std::setw(7)
            << "fail" << "\n";
        for (const SummaryEntry& e : summarize(r)) {
            out << std::left << std::setw(6) << e.experts << std::setw(14) << e.method << std::right << std::fixed
                << std::setprecision(5) << std::setw(12) << e.smse << std::setw(12) << e.msll << std::setprecision(3)
                << std::setw(11) << e.train_s << std::setw(11) << e.predict_s << std::setw(7) << e.failures << "\n";
            out.unsetf(std::ios::fixed);
        }
    }

    inline void write_report(std::ostream& out, const BenchmarkResult& r) {
        out << "environment: " << r.fingerprint << "\n";
        for (const auto& n : r.notes)
            out << "note: " << n << "\n";
        out << "\nmedians over seeds\n";
        write_summary_table(out, r);
        bool any_error = false;
        for (const auto& row : r.rows) {
            if (row.error.empty() && row.flagged == 0)
                continue;
            if (!any_error)
                out << "\nissues\n";
            any_error = true;
            out << row.method << " seed=" << row.seed << " M=" << row.experts;
            if (row.flagged)
                out << " flagged_points=" << row.flagged;
            if (!row.error.empty())
                out << " error: " << row.error;
            out << "\n";
        }
    }

    inline void write_predictions_csv(std::ostream& out, const BenchmarkResult& r) {
        out << "method,seed,M,index,y_true,mean,variance\n";
        for (const auto& p : r.predictions) {
            const Vector& y = r.test_targets.at(p.seed);
            for (Index i = 0; i < p.means.size(); ++i)
                out << p.method << "," << p.seed << "," << p.experts << "," << i << "," << detail::fmt_double(y(i)) << ","
                    << detail::fmt_double(p.means(i)) << "," << detail::fmt_double(p.variances(i)) << "\n";
        }
    }

    /// Precision matrices and cluster labels, one block per DGEA run, in matrix text format.
    inline void write_graph_dump(std::ostream& out, const BenchmarkResult& r) {
        for (const auto& g : r.graphs) {
            out << "# seed=" << g.seed << " M=" << g.experts << " lambda=" << g.lambda << "\n";
            out << "# precision\n";
            write_matrix_text(out, g.omega);
            out << "# labels\n";
            for (std::size_t i = 0; i < g.labels.size(); ++i)
                out << (i ? " " : "") << g.labels[i];
            out << "\n";
        }
    }

} // namespace dgea

#endif
