#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msplit/core.hpp"
#include "msplit/multisplit.hpp"
#include "msplit/regression.hpp"
#include "msplit/screening.hpp"

namespace msplit {

enum class BetaMode { Uniform, VaryingStrength };
enum class DesignSource { Toeplitz, External };

enum class Method {
    MultiFwer,
    MultiFdr,
    MultiFdrCorrected,
    MultiEv,
    MultiMedian, // fixed gamma = 0.5, thresholded at alpha
    SingleSplit,
    AdaptiveLasso,
    ClassicBh,
};

std::string to_string(Method m);
Method parse_method(const std::string& name);
std::string to_string(BetaMode m);
BetaMode parse_beta_mode(const std::string& name);
bool uses_split_matrix(Method m);

struct SimulationConfig {
    std::string label;
    int n = 100;
    int p = 100;
    double rho = 0.5;
    int s = 5;
    BetaMode beta_mode = BetaMode::Uniform;
    double snr = 4.0;
    int reps = 50;
    int B = 50;
    ScreenOptions screen;
    double alpha = 0.05;
    double q = 0.05;
    double gamma_min = 0.05;
    double K = 20.0;
    PValueMode pvalue_mode = PValueMode::Normal;
    DesignSource design_source = DesignSource::Toeplitz;
    // External designs are held fixed across reps.
    Eigen::MatrixXd external_design;
    std::string design_path;
    // When set, used as beta in every rep instead of sampling.
    std::optional<Eigen::VectorXd> fixed_beta;
    // Noise variance used when there is no signal (s = 0).
    double null_sigma_sq = 1.0;
    std::vector<Method> methods = {Method::MultiFwer, Method::SingleSplit};

    // Throws ValidationError.
    void validate() const;
    int effective_p() const;
};

/// Rows i.i.d. N(0, Sigma) with Sigma_jk = rho^|j-k|, via the AR(1) recursion.
Eigen::MatrixXd toeplitz_design(int n, int p, double rho, Engine& engine);

/// s randomly placed nonzeros: all 1 (uniform) or a random arrangement of 1..s.
Eigen::VectorXd sample_beta(int p, int s, BetaMode mode, Engine& engine);

/// beta' Sigma beta for the Toeplitz Sigma, exact.
double toeplitz_quadratic_form(const Eigen::VectorXd& beta, double rho);

/// sigma^2 = beta' Sigma beta / snr. Throws NumericalError on zero signal.
double sigma_for_snr(const Eigen::VectorXd& beta, double rho, double snr);

/// Full-data OLS p-values, Benjamini-Hochberg step-up at (i/p) q. Throws
/// ValidationError when p >= n, where the standard method breaks down.
SelectionReport classic_bh_select(const Dataset& data, double q, PValueMode mode = PValueMode::Normal);

/// Support of the two-stage adaptive Lasso on the full data.
SelectionReport adaptive_lasso_select(const Dataset& data, const RngSpec& rng, int folds = 10);

struct RunMetrics {
    int true_positives = 0;
    int false_positives = 0;
    int fwer_indicator = 0; // V > 0
    double fdp = 0.0;       // V / max(1, R)
};

RunMetrics score_selection(const IndexList& selected, const Eigen::VectorXd& beta);

struct RepRecord {
    int rep = 0;
    Method method = Method::MultiFwer;
    bool ok = true;
    std::string error;
    RunMetrics metrics;
    int selected_size = 0;
    int splits_empty = 0;
};

struct MetricSummary {
    double mean = 0.0;
    double se = 0.0;
};

struct MethodSummary {
    Method method = Method::MultiFwer;
    int completed = 0;
    int failed = 0;
    MetricSummary tp;
    MetricSummary fp;
    MetricSummary fwer; // fraction of reps with V > 0
    MetricSummary fdr;  // mean false discovery proportion
};

struct ExperimentResult {
    SimulationConfig config;
    std::vector<RepRecord> records; // rep-major, methods in config order
    std::vector<MethodSummary> summaries;

    const MethodSummary& summary(Method m) const;
};

/// One replicate's data: design, coefficients and response.
struct SimulatedData {
    Dataset data;
    Eigen::VectorXd beta;
    double sigma_sq = 0.0;
};

SimulatedData simulate_rep(const SimulationConfig& config, const RngSpec& rep_rng);

/// All methods on one replicate's data; method failures are recorded, never thrown.
std::vector<RepRecord> run_rep(const SimulationConfig& config, int rep, const RngSpec& rng);

/// Reps in parallel (OpenMP); rep r uses rng.child(r), so the output matches
/// run_experiment_serial exactly.
ExperimentResult run_experiment(const SimulationConfig& config, const RngSpec& rng);
ExperimentResult run_experiment_serial(const SimulationConfig& config, const RngSpec& rng);

std::vector<MethodSummary> summarize(const SimulationConfig& config, const std::vector<RepRecord>& records);

} // namespace msplit
