#pragma once

#include <vector>

#include <Eigen/Dense>

#include "msplit/core.hpp"

namespace msplit {

/// Least-squares fit on a column subset (no intercept).
struct OlsFit {
    Eigen::VectorXd coefficients;
    Eigen::VectorXd standard_errors;
    double sigma_hat_sq = 0.0; // RSS / df
    int df = 0;                // n_fit - k
    IndexList subset;          // column indices the coefficients refer to
};

// Reciprocal condition estimate below which a design is declared rank deficient.
inline constexpr double kRankTolerance = 1e-10;

/// Column-pivoted QR solve. Throws RankDeficiencyError naming the offending
/// positions (into `subset`) when the reciprocal condition estimate drops
/// below kRankTolerance, ValidationError when k == 0 or n_fit < k + 1.
OlsFit ols_fit(const Eigen::MatrixXd& x_subset, const Eigen::VectorXd& y, IndexList subset = {});

/// Convenience overload: rows and columns of a dataset.
OlsFit ols_fit(const Dataset& data, const IndexList& rows, const IndexList& columns);

enum class PValueMode { Normal, StudentT };

struct CoefficientPValues {
    Eigen::VectorXd values; // two-sided, in (0, 1]
    // Set where se_j == 0: p clamped to the smallest positive double when
    // beta_j != 0, or set to 1 when beta_j == 0.
    std::vector<bool> degenerate;

    bool any_degenerate() const;
};

CoefficientPValues coefficient_pvalues(const OlsFit& fit, PValueMode mode = PValueMode::Normal);

/// Two-sided tail probability of a t-statistic.
double two_sided_pvalue(double t, PValueMode mode, int df);

} // namespace msplit
