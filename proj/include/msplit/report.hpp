#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "msplit/core.hpp"
#include "msplit/evaluation.hpp"
#include "msplit/multisplit.hpp"

namespace msplit {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "1.0.0";

std::uint64_t fnv1a(const std::string& bytes);
std::string hex64(std::uint64_t v);

/// Everything needed to re-run a subcommand: its name, seed and resolved
/// settings. The hash covers the canonical JSON dump and is stamped into every
/// output file.
struct RunManifest {
    std::string command;
    std::uint64_t seed = 0;
    Json settings = Json::object();

    Json to_json() const; // includes "hash"
    std::string hash() const;
    static RunManifest from_json(const Json& j);
};

/// Output files are staged in memory and only written once the whole run
/// succeeded; write_all() goes through one writer.
class OutputSet {
public:
    explicit OutputSet(std::string directory) : dir_(std::move(directory)) {}
    void add(const std::string& filename, std::string contents);
    // Throws IoError.
    void write_all() const;
    const std::vector<std::pair<std::string, std::string>>& files() const { return files_; }

private:
    std::string dir_;
    std::vector<std::pair<std::string, std::string>> files_;
};

// --- analyze ---------------------------------------------------------------

struct AnalysisSettings {
    int B = 50;
    double alpha = 0.05;
    double q = 0.05;
    double gamma_min = 0.05;
    double K = 20.0;
};

/// Every rule evaluated on one p-value matrix; `primary` names the rule the
/// report is about.
struct AnalysisResult {
    PValueMatrix matrix;
    AggregatedPValues adaptive;
    AggregatedPValues uncapped;
    AggregatedPValues median;
    SelectionReport fwer;
    SelectionReport fdr;
    SelectionReport fdr_corrected;
    SelectionReport ev;
    SelectionReport single_split;
    SelectionRule primary;

    const SelectionReport& report_for(const SelectionRule& rule) const;
};

AnalysisResult analyze_matrix(PValueMatrix matrix, const AnalysisSettings& settings, const SelectionRule& primary);

std::string pvalues_csv(const Dataset& data, const AnalysisResult& result, const std::string& manifest_hash);
Json report_json(const Dataset& data, const AnalysisResult& result, const RunManifest& manifest);
std::string matrix_csv(const Dataset& data, const PValueMatrix& matrix, const std::string& manifest_hash);

struct LoadedMatrix {
    std::vector<std::string> names;
    Eigen::MatrixXd values; // B x p
};

/// Reads the matrix written by matrix_csv.
LoadedMatrix read_matrix_csv(const std::string& path);

// --- ecdf ------------------------------------------------------------------

std::string ecdf_csv(const EcdfCrossing& crossing, const std::string& manifest_hash);
/// The bound f(p) sampled at `points` equally spaced p in [0, 1].
std::string bound_csv(double alpha, double gamma_min, int points, const std::string& manifest_hash);

// --- simulate --------------------------------------------------------------

struct GridPoint {
    SimulationConfig config;
    Json varied = Json::object(); // grid coordinates of this point
};

struct ExperimentGrid {
    std::string label;
    std::uint64_t seed = 1;
    std::vector<GridPoint> points;
};

/// Base config plus a cartesian product over "grid" keys (in file order).
/// Relative external-design paths resolve against `base_dir`.
ExperimentGrid parse_experiment_grid(const Json& j, const std::string& base_dir = ".");

/// Applies one JSON object of settings on top of `config`.
void apply_settings(SimulationConfig& config, const Json& settings, const std::string& base_dir);

Json config_to_json(const SimulationConfig& config);

std::string experiment_csv_header();
std::string experiment_csv_rows(const GridPoint& point, const ExperimentResult& result);
Json summary_json(const GridPoint& point, const ExperimentResult& result);

} // namespace msplit
