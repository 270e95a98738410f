#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "msplit/core.hpp"
#include "msplit/regression.hpp"
#include "msplit/screening.hpp"

namespace msplit {

struct SplitMeta {
    int screened_size = 0;    // |S^(b)| after capping; the Bonferroni factor
    IndexList screened;
    bool empty_screen = false;
    bool truncated = false;   // screened set hit the n_out/2 cap
    bool undersized = false;  // fixed screener found fewer variables than its target
    int dropped_for_rank = 0; // columns removed to make the OLS design full rank
    bool degenerate_pvalue = false;
};

// Uncapped entry for a variable outside the screened set: it can never be
// rejected, whatever the level.
inline constexpr double kNeverRejected = std::numeric_limits<double>::infinity();

/// One split's per-variable adjusted p-values.
struct SplitRow {
    Eigen::VectorXd adjusted; // min(p_raw * |S|, 1); 1 outside S
    Eigen::VectorXd uncapped; // p_raw * |S| without the cap; kNeverRejected outside S
    SplitMeta meta;
};

/// B x p adjusted p-values, one row per split.
struct PValueMatrix {
    Eigen::MatrixXd values;
    Eigen::MatrixXd uncapped;
    std::vector<SplitMeta> split_meta;

    int B() const { return static_cast<int>(values.rows()); }
    int p() const { return static_cast<int>(values.cols()); }

    SplitRow row(int b) const;
};

struct MultiSplitOptions {
    int B = 50;
    ScreenOptions screen;
    PValueMode pvalue_mode = PValueMode::Normal;
};

/// Screen on the plan's first half, OLS-test the screened variables on the
/// second half, Bonferroni-adjust by |S|. Rank problems are repaired by
/// dropping offending columns with the smallest screening |coefficient|; the
/// split itself never fails on them.
SplitRow split_pvalues(const Dataset& data, const SplitPlan& plan, const ScreenOptions& screen, PValueMode mode,
                       const RngSpec& rng);

/// Rows computed in parallel (OpenMP); identical to the serial version.
PValueMatrix multi_split_pvalues(const Dataset& data, const MultiSplitOptions& options, const RngSpec& rng);
PValueMatrix multi_split_pvalues_serial(const Dataset& data, const MultiSplitOptions& options, const RngSpec& rng);

/// Type-1 (order statistic) quantile of an ascending sample: the value at
/// rank ceil(gamma * B). gamma * B within 1e-10 of an integer counts as that
/// integer.
double empirical_quantile(std::span<const double> sorted_values, double gamma);

int quantile_rank(int B, double gamma);

/// Q(gamma) = min(1, q_gamma(P) / gamma) for an ascending column.
double quantile_pvalue(std::span<const double> sorted_column, double gamma);

/// inf over gamma in (gamma_min, 1) of q_gamma(P) / gamma for an ascending
/// column, in closed form: min over k >= floor(gamma_min * B) + 1 of P_(k) * B / k.
double adaptive_infimum(std::span<const double> sorted_column, double gamma_min);

inline double adaptive_factor(double gamma_min) { return 1.0 - std::log(gamma_min); }

struct AggregatedPValues {
    enum class Mode { FixedGamma, Adaptive };
    Eigen::VectorXd values;
    Mode mode = Mode::Adaptive;
    double gamma = 0.0; // gamma for FixedGamma, gamma_min for Adaptive
    bool capped = true;
};

AggregatedPValues aggregate_fixed_gamma(const PValueMatrix& matrix, double gamma);
AggregatedPValues aggregate_adaptive(const PValueMatrix& matrix, double gamma_min);
/// Same aggregation on the uncapped matrix with every min(1, .) removed.
AggregatedPValues aggregate_adaptive_uncapped(const PValueMatrix& matrix, double gamma_min);

struct SelectionRule {
    enum class Kind { Fwer, Fdr, Ev, SingleSplit, ClassicBh, AdaptiveLasso };
    Kind kind = Kind::Fwer;
    double level = 0.05;     // alpha, or q for Fdr
    bool corrected = false;  // Fdr: divide q by the harmonic sum
    double K = 1.0;          // Ev correction factor

    std::string name() const;
    // Human-readable error-control target, e.g. "FWER <= 0.05" or "E[V] <= 1".
    std::string control_target(int p) const;
};

struct SelectionReport {
    IndexList selected; // ascending
    SelectionRule rule;
    Eigen::VectorXd pvalues;   // per-variable values the rule was applied to
    double effective_level = 0.0;
    int splits_empty = 0;
    int splits_truncated = 0;
    int splits_rank_repaired = 0;
    int splits_degenerate_pvalue = 0;
};

SelectionReport fwer_select(const AggregatedPValues& agg, double alpha);

/// Step-up rule h = max{i : P_(i) <= i q'}, selecting the h smallest values
/// (ties by index). q' = q, or q / sum_{i<=p} 1/i when corrected. Pass the
/// uncapped aggregate: with capped values every variable sits at or below
/// i q once i q >= 1, so the rule would select everything when p q >= 1.
SelectionReport fdr_select(const AggregatedPValues& agg, double q, bool corrected);

/// Reject when uncapped P_j / K <= alpha; controls E[V] <= alpha K.
SelectionReport ev_select(const AggregatedPValues& uncapped, double alpha, double K);

double harmonic_sum(int p);

/// Standalone step-up on raw values with threshold i * level_per_rank for the
/// i-th smallest; returns selected indices ascending.
IndexList step_up(const Eigen::VectorXd& pvalues, double level_per_rank);

/// One split (B = 1) thresholded at alpha. Uses the same substreams as row 0
/// of a multi-split run with the same rng.
SelectionReport single_split_select(const Dataset& data, const ScreenOptions& screen, double alpha,
                                    const RngSpec& rng, PValueMode mode = PValueMode::Normal);
SelectionReport single_split_from_row(const SplitRow& row, double alpha);

void attach_split_flags(SelectionReport& report, const PValueMatrix& matrix);

struct EcdfCrossing {
    bool crosses = false;
    std::vector<std::pair<double, double>> ecdf; // (P_(k), k / B)
};

/// Whether the ECDF of one variable's adjusted p-values crosses
/// f(p) = max{gamma_min, (1 - log gamma_min) p / alpha}; equivalent to the
/// adaptive aggregate being <= alpha.
EcdfCrossing ecdf_crossing_check(std::span<const double> column, double alpha, double gamma_min);

double ecdf_bound(double p, double alpha, double gamma_min);

} // namespace msplit
