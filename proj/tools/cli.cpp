#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <omp.h>

#include <CLI11.hpp>

#include "msplit/csv.hpp"
#include "msplit/errors.hpp"
#include "msplit/evaluation.hpp"
#include "msplit/multisplit.hpp"
#include "msplit/report.hpp"

namespace msplit::cli {

namespace {

namespace fs = std::filesystem;

constexpr const char* kThreadsEnv = "MSPLIT_THREADS";

struct AnalyzeOptions {
    std::string input;
    std::string response;
    bool header = true;
    std::string delimiter = ",";
    bool center = false;
    std::string screener = "adap";
    int B = 50;
    std::string rule = "fwer";
    double alpha = 0.05;
    double q = 0.05;
    double gamma_min = 0.05;
    double K = 20.0;
    std::uint64_t seed = 1;
    std::string pvalue_mode = "normal";
    int folds = 10;
    int fixed_target = 0;
    int random_size = 16;

    Json to_json() const {
        return {{"input", input},         {"response", response},   {"header", header},
                {"delimiter", delimiter}, {"center", center},       {"screener", screener},
                {"B", B},                 {"rule", rule},           {"alpha", alpha},
                {"q", q},                 {"gamma_min", gamma_min}, {"K", K},
                {"pvalue_mode", pvalue_mode}, {"folds", folds},     {"fixed_target", fixed_target},
                {"random_size", random_size}};
    }

    static AnalyzeOptions from_manifest(const RunManifest& m) {
        AnalyzeOptions o;
        const Json& s = m.settings;
        try {
            o.input = s.at("input").get<std::string>();
            o.response = s.at("response").get<std::string>();
            o.header = s.value("header", o.header);
            o.delimiter = s.value("delimiter", o.delimiter);
            o.center = s.value("center", o.center);
            o.screener = s.value("screener", o.screener);
            o.B = s.value("B", o.B);
            o.rule = s.value("rule", o.rule);
            o.alpha = s.value("alpha", o.alpha);
            o.q = s.value("q", o.q);
            o.gamma_min = s.value("gamma_min", o.gamma_min);
            o.K = s.value("K", o.K);
            o.pvalue_mode = s.value("pvalue_mode", o.pvalue_mode);
            o.folds = s.value("folds", o.folds);
            o.fixed_target = s.value("fixed_target", o.fixed_target);
            o.random_size = s.value("random_size", o.random_size);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(std::string("manifest settings: ") + e.what());
        }
        o.seed = m.seed;
        return o;
    }
};

struct EcdfOptions {
    std::string matrix;
    std::string variable;
    double alpha = 0.05;
    double gamma_min = 0.05;
    int grid_points = 201;

    Json to_json() const {
        return {{"matrix", matrix}, {"variable", variable}, {"alpha", alpha}, {"gamma_min", gamma_min},
                {"grid_points", grid_points}};
    }
};

SelectionRule parse_rule(const std::string& name, double alpha, double q, double K) {
    if (name == "fwer") return {SelectionRule::Kind::Fwer, alpha, false, 1.0};
    if (name == "fdr") return {SelectionRule::Kind::Fdr, q, false, 1.0};
    if (name == "fdr-corrected") return {SelectionRule::Kind::Fdr, q, true, 1.0};
    if (name == "ev") return {SelectionRule::Kind::Ev, alpha, false, K};
    if (name == "single-split") return {SelectionRule::Kind::SingleSplit, alpha, false, 1.0};
    throw ValidationError("unknown rule '" + name + "' (fwer, fdr, fdr-corrected, ev, single-split)");
}

PValueMode parse_mode(const std::string& s) {
    if (s == "normal") return PValueMode::Normal;
    if (s == "t") return PValueMode::StudentT;
    throw ValidationError("unknown p-value mode '" + s + "' (normal, t)");
}

char parse_delimiter(const std::string& s) {
    if (s == "\\t" || s == "tab") return '\t';
    if (s.size() != 1) throw ValidationError("delimiter must be a single character");
    return s[0];
}

ColumnRef parse_column(const std::string& s) {
    if (!s.empty() && s.find_first_not_of("0123456789") == std::string::npos) return std::stoi(s);
    return s;
}

void check_unit_interval(const char* what, double v) {
    if (!(v > 0.0 && v < 1.0)) throw ValidationError(std::string(what) + " must lie in (0, 1)");
}

int resolve_threads(int flag) {
    if (flag > 0) return flag;
    if (const char* env = std::getenv(kThreadsEnv)) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1) throw ValidationError(std::string(kThreadsEnv) + " must be a positive integer");
        return static_cast<int>(v);
    }
    return omp_get_max_threads();
}

RunManifest load_manifest(const std::string& path, const std::string& command) {
    Json j;
    try {
        j = Json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("manifest '" + path + "' is not valid JSON: " + e.what());
    }
    RunManifest m = RunManifest::from_json(j);
    if (m.command != command) throw ValidationError("manifest is for '" + m.command + "', not '" + command + "'");
    return m;
}

// Runs `body` and maps library exceptions to exit codes. `stage` names the
// step in progress for the error message.
int guarded(const std::string& command, std::ostream& err, const std::function<void(std::string&)>& body) {
    std::string stage = "setup";
    try {
        body(stage);
        return kOk;
    } catch (const ValidationError& e) {
        err << "msplit " << command << ": " << stage << ": " << e.what() << '\n';
        return kConfigError;
    } catch (const IoError& e) {
        err << "msplit " << command << ": " << stage << ": " << e.what() << '\n';
        return kIoError;
    } catch (const std::exception& e) {
        err << "msplit " << command << ": " << stage << ": " << e.what() << '\n';
        return kNumericalError;
    }
}

int run_analyze(const AnalyzeOptions& o, const std::string& output, std::ostream& out, std::ostream& err) {
    return guarded("analyze", err, [&](std::string& stage) {
        stage = "config";
        if (o.input.empty()) throw ValidationError("--input is required");
        if (o.response.empty()) throw ValidationError("--response is required");
        if (o.B < 1) throw ValidationError("B must be >= 1");
        if (!(o.K >= 1.0)) throw ValidationError("K must be >= 1");
        check_unit_interval("alpha", o.alpha);
        check_unit_interval("q", o.q);
        check_unit_interval("gamma-min", o.gamma_min);
        const SelectionRule rule = parse_rule(o.rule, o.alpha, o.q, o.K);
        MultiSplitOptions ms;
        ms.B = o.B;
        ms.screen.kind = parse_screener(o.screener);
        ms.screen.folds = o.folds;
        ms.screen.fixed_target = o.fixed_target;
        ms.screen.random_size = o.random_size;
        ms.pvalue_mode = parse_mode(o.pvalue_mode);
        CsvOptions csv;
        csv.header = o.header;
        csv.delimiter = parse_delimiter(o.delimiter);

        RunManifest manifest;
        manifest.command = "analyze";
        manifest.seed = o.seed;
        manifest.settings = o.to_json();
        const std::string hash = manifest.hash();

        stage = "read input";
        const Table table = read_table(o.input, csv);
        stage = "validate input";
        Dataset data = validate_dataset(table, parse_column(o.response));
        if (o.center) data = data.centered();

        stage = "multi-split p-values";
        PValueMatrix matrix = multi_split_pvalues(data, ms, RngSpec{o.seed});
        stage = "aggregation";
        const AnalysisResult result =
            analyze_matrix(std::move(matrix), {o.B, o.alpha, o.q, o.gamma_min, o.K}, rule);

        stage = "write outputs";
        OutputSet files(output);
        files.add("pvalues.csv", pvalues_csv(data, result, hash));
        files.add("report.json", report_json(data, result, manifest).dump(2) + "\n");
        files.add("pvalue_matrix.csv", matrix_csv(data, result.matrix, hash));
        files.add("manifest.json", manifest.to_json().dump(2) + "\n");
        files.write_all();

        const SelectionReport& primary = result.report_for(rule);
        out << "rule " << rule.name() << " (" << rule.control_target(data.p()) << "): " << primary.selected.size()
            << " selected";
        for (int j : primary.selected) out << ' ' << data.name(j);
        out << "\nmanifest " << hash << "\n";
    });
}

int run_simulate(const Json& config, const std::string& base_dir, std::uint64_t seed, int reps_override,
                 const std::string& output, std::ostream& out, std::ostream& err) {
    return guarded("simulate", err, [&](std::string& stage) {
        stage = "config";
        ExperimentGrid grid = parse_experiment_grid(config, base_dir);
        grid.seed = seed;
        if (reps_override > 0) {
            for (auto& point : grid.points) point.config.reps = reps_override;
        }
        RunManifest manifest;
        manifest.command = "simulate";
        manifest.seed = seed;
        manifest.settings = {{"config", config}, {"base_dir", base_dir}, {"reps_override", reps_override}};
        const std::string hash = manifest.hash();

        std::string csv = "# manifest=" + hash + "\n" + experiment_csv_header();
        Json summaries = Json::array();
        const RngSpec root{seed};
        for (std::size_t i = 0; i < grid.points.size(); ++i) {
            const GridPoint& point = grid.points[i];
            stage = "run " + point.config.label;
            const ExperimentResult result = run_experiment(point.config, root.child(i));
            csv += experiment_csv_rows(point, result);
            summaries.push_back(summary_json(point, result));
            for (const MethodSummary& s : result.summaries) {
                out << point.config.label << "  " << std::left << std::setw(20) << to_string(s.method) << std::right
                    << std::fixed << std::setprecision(3) << " TP " << s.tp.mean << "  FP " << s.fp.mean << "  FWER "
                    << s.fwer.mean << "  FDR " << s.fdr.mean;
                if (s.failed > 0) out << "  failed " << s.failed;
                out << '\n';
            }
        }
        Json summary;
        summary["manifest"] = manifest.to_json();
        summary["label"] = grid.label;
        summary["configs"] = summaries;

        stage = "write outputs";
        OutputSet files(output);
        files.add("results.csv", csv);
        files.add("summary.json", summary.dump(2) + "\n");
        files.add("manifest.json", manifest.to_json().dump(2) + "\n");
        files.write_all();
        out << "manifest " << hash << "\n";
    });
}

int run_ecdf(const EcdfOptions& o, const std::string& output, std::ostream& out, std::ostream& err) {
    return guarded("ecdf", err, [&](std::string& stage) {
        stage = "config";
        if (o.matrix.empty()) throw ValidationError("--matrix is required");
        if (o.variable.empty()) throw ValidationError("--variable is required");
        check_unit_interval("alpha", o.alpha);
        check_unit_interval("gamma-min", o.gamma_min);
        if (o.grid_points < 2) throw ValidationError("grid-points must be >= 2");
        RunManifest manifest;
        manifest.command = "ecdf";
        manifest.seed = 0;
        manifest.settings = o.to_json();
        const std::string hash = manifest.hash();

        stage = "read matrix";
        const LoadedMatrix m = read_matrix_csv(o.matrix);
        stage = "lookup variable";
        Index column = -1;
        for (std::size_t j = 0; j < m.names.size(); ++j) {
            if (m.names[j] == o.variable) column = static_cast<Index>(j);
        }
        if (column < 0) throw ValidationError("unknown variable '" + o.variable + "'");

        stage = "crossing check";
        const Eigen::VectorXd values = m.values.col(column);
        const EcdfCrossing crossing =
            ecdf_crossing_check(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())), o.alpha,
                                o.gamma_min);
        std::vector<double> sorted(values.data(), values.data() + values.size());
        std::sort(sorted.begin(), sorted.end());
        const double pj = std::min(1.0, adaptive_factor(o.gamma_min) * adaptive_infimum(sorted, o.gamma_min));

        Json verdict;
        verdict["manifest"] = manifest.to_json();
        verdict["variable"] = o.variable;
        verdict["B"] = values.size();
        verdict["alpha"] = o.alpha;
        verdict["gamma_min"] = o.gamma_min;
        verdict["bound_slope"] = adaptive_factor(o.gamma_min) / o.alpha;
        verdict["pvalue"] = pj;
        verdict["crosses"] = crossing.crosses;

        stage = "write outputs";
        OutputSet files(output);
        files.add("ecdf.csv", ecdf_csv(crossing, hash));
        files.add("bound.csv", bound_csv(o.alpha, o.gamma_min, o.grid_points, hash));
        files.add("ecdf.json", verdict.dump(2) + "\n");
        files.add("manifest.json", manifest.to_json().dump(2) + "\n");
        files.write_all();
        out << o.variable << ": P = " << format_double(pj) << ", crosses bound: " << (crossing.crosses ? "yes" : "no")
            << "\n";
    });
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-split p-values and variable selection for high-dimensional linear models", "msplit"};
    app.require_subcommand(1);
    app.fallthrough();
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads (default: $MSPLIT_THREADS, else all cores)")
        ->check(CLI::NonNegativeNumber);

    AnalyzeOptions a;
    std::string a_output = "msplit-out";
    std::string a_manifest;
    CLI::App* analyze = app.add_subcommand("analyze", "Multi-split analysis of a CSV data set");
    analyze->add_option("-i,--input", a.input, "CSV file with response and predictors");
    analyze->add_option("-r,--response", a.response, "Response column: header name or 1-based index");
    analyze->add_flag("!--no-header", a.header, "The file has no header row");
    analyze->add_option("--delimiter", a.delimiter, "Field delimiter (\\t for tab)")->capture_default_str();
    analyze->add_flag("--center", a.center, "Centre response and predictors before fitting");
    analyze->add_option("--screener", a.screener, "fixed, cv, adap or random")->capture_default_str();
    analyze->add_option("-B,--splits", a.B, "Number of random splits")->capture_default_str();
    analyze->add_option("--rule", a.rule, "fwer, fdr, fdr-corrected, ev or single-split")->capture_default_str();
    analyze->add_option("--alpha", a.alpha)->capture_default_str();
    analyze->add_option("-q,--q", a.q, "FDR level")->capture_default_str();
    analyze->add_option("--gamma-min", a.gamma_min)->capture_default_str();
    analyze->add_option("-K,--K", a.K, "Correction factor for the ev rule")->capture_default_str();
    analyze->add_option("--seed", a.seed)->capture_default_str();
    analyze->add_option("--pvalue-mode", a.pvalue_mode, "normal or t")->capture_default_str();
    analyze->add_option("--folds", a.folds, "Cross-validation folds")->capture_default_str();
    analyze->add_option("--fixed-target", a.fixed_target, "Size for the fixed screener (0: n/6)");
    analyze->add_option("--random-size", a.random_size, "Size for the random screener")->capture_default_str();
    analyze->add_option("-o,--output", a_output, "Output directory")->capture_default_str();
    analyze->add_option("--manifest", a_manifest, "Re-run from a manifest.json; other settings are ignored");

    std::string s_config;
    std::string s_output = "msplit-sim";
    std::string s_manifest;
    std::uint64_t s_seed = 0;
    int s_reps = 0;
    CLI::App* simulate = app.add_subcommand("simulate", "Run a simulation grid from a JSON config");
    simulate->add_option("-c,--config", s_config, "Experiment grid JSON");
    simulate->add_option("--seed", s_seed, "Override the config seed");
    simulate->add_option("--reps", s_reps, "Override reps for every grid point");
    simulate->add_option("-o,--output", s_output, "Output directory")->capture_default_str();
    simulate->add_option("--manifest", s_manifest, "Re-run from a manifest.json");

    EcdfOptions e;
    std::string e_output = "msplit-ecdf";
    std::string e_manifest;
    CLI::App* ecdf = app.add_subcommand("ecdf", "ECDF of one variable's split p-values against the rejection bound");
    ecdf->add_option("-m,--matrix", e.matrix, "pvalue_matrix.csv written by analyze");
    ecdf->add_option("-v,--variable", e.variable, "Variable name");
    ecdf->add_option("--alpha", e.alpha)->capture_default_str();
    ecdf->add_option("--gamma-min", e.gamma_min)->capture_default_str();
    ecdf->add_option("--grid-points", e.grid_points, "Points for the sampled bound")->capture_default_str();
    ecdf->add_option("-o,--output", e_output, "Output directory")->capture_default_str();
    ecdf->add_option("--manifest", e_manifest, "Re-run from a manifest.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& ex) {
        if (ex.get_exit_code() == 0) {
            app.exit(ex, out, err);
            return kOk;
        }
        err << "msplit: " << ex.what() << "\n" << "Run with --help for usage.\n";
        return kConfigError;
    }

    try {
        omp_set_num_threads(resolve_threads(threads));
    } catch (const ValidationError& ex) {
        err << "msplit: " << ex.what() << '\n';
        return kConfigError;
    }

    if (analyze->parsed()) {
        if (!a_manifest.empty()) {
            AnalyzeOptions replay;
            const int rc = guarded("analyze", err, [&](std::string& stage) {
                stage = "read manifest";
                replay = AnalyzeOptions::from_manifest(load_manifest(a_manifest, "analyze"));
            });
            if (rc != kOk) return rc;
            return run_analyze(replay, a_output, out, err);
        }
        return run_analyze(a, a_output, out, err);
    }

    if (simulate->parsed()) {
        Json config;
        std::string base_dir;
        std::uint64_t seed = 0;
        int reps = s_reps;
        const int rc = guarded("simulate", err, [&](std::string& stage) {
            if (!s_manifest.empty()) {
                stage = "read manifest";
                const RunManifest m = load_manifest(s_manifest, "simulate");
                try {
                    config = m.settings.at("config");
                    base_dir = m.settings.at("base_dir").get<std::string>();
                    reps = m.settings.value("reps_override", 0);
                } catch (const nlohmann::json::exception& ex) {
                    throw ValidationError(std::string("manifest settings: ") + ex.what());
                }
                seed = m.seed;
                return;
            }
            if (s_config.empty()) throw ValidationError("--config is required");
            stage = "read config";
            const std::string text = read_file(s_config);
            try {
                config = Json::parse(text);
            } catch (const nlohmann::json::parse_error& ex) {
                throw ValidationError("config '" + s_config + "' is not valid JSON: " + ex.what());
            }
            base_dir = fs::absolute(fs::path(s_config)).parent_path().string();
            seed = config.value("seed", std::uint64_t{1});
            if (simulate->count("--seed") > 0) seed = s_seed;
        });
        if (rc != kOk) return rc;
        return run_simulate(config, base_dir, seed, reps, s_output, out, err);
    }

    if (ecdf->parsed()) {
        if (!e_manifest.empty()) {
            const int rc = guarded("ecdf", err, [&](std::string& stage) {
                stage = "read manifest";
                const RunManifest m = load_manifest(e_manifest, "ecdf");
                try {
                    e.matrix = m.settings.at("matrix").get<std::string>();
                    e.variable = m.settings.at("variable").get<std::string>();
                    e.alpha = m.settings.at("alpha").get<double>();
                    e.gamma_min = m.settings.at("gamma_min").get<double>();
                    e.grid_points = m.settings.at("grid_points").get<int>();
                } catch (const nlohmann::json::exception& ex) {
                    throw ValidationError(std::string("manifest settings: ") + ex.what());
                }
            });
            if (rc != kOk) return rc;
        }
        return run_ecdf(e, e_output, out, err);
    }
    return kConfigError;
}

} // namespace msplit::cli
