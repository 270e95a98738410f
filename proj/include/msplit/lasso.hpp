#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "msplit/core.hpp"

namespace msplit {

struct LassoOptions {
    double tolerance = 1e-7; // on max coordinate change, relative to the response scale
    long max_iter = 100000;  // coordinate sweeps per lambda
};

/// Cyclic coordinate descent for
///
///     (1/(2n)) ||y - X b||^2 + lambda * sum_j w_j |b_j|
///
/// on the design exactly as given (no centering or scaling here). Columns may
/// have arbitrary norms; zero columns are never activated. Penalty factors
/// default to 1; an infinite factor pins the coefficient at 0. The current
/// coefficients persist between solve() calls, which is how warm starts along
/// a path work.
class CoordinateDescent {
public:
    CoordinateDescent(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                      Eigen::VectorXd penalty_factors = {}, LassoOptions options = {});

    // Throws ConvergenceError after options.max_iter sweeps.
    void solve(double lambda);

    void set_beta(const Eigen::VectorXd& beta);
    const Eigen::VectorXd& beta() const { return beta_; }
    const Eigen::VectorXd& residual() const { return resid_; }
    long sweeps() const { return sweeps_; }

private:
    double sweep(double lambda, const IndexList& coordinates, bool active_only);
    // Direct solve of the stationarity equations on the current support and
    // signs; kept only when the signs survive. The next full sweep checks KKT.
    bool polish(double lambda);

    static constexpr int kSweepsBeforePolish = 3;

    const Eigen::MatrixXd& x_;
    const Eigen::VectorXd& y_;
    Eigen::VectorXd penalty_;
    LassoOptions options_;
    Eigen::VectorXd col_sq_; // ||x_j||^2 / n
    Eigen::VectorXd beta_;
    Eigen::VectorXd resid_;
    Eigen::VectorXd gradient_; // X'r / n at the last converged solution
    bool gradient_valid_ = false;
    double last_lambda_ = 0.0;
    double threshold_ = 0.0;
    long sweeps_ = 0;
};

/// Single-lambda solve. Expects a standardized design (zero mean, unit
/// variance columns) and centred response, but does not enforce it.
Eigen::VectorXd lasso_coordinate_descent(const Eigen::MatrixXd& x_std, const Eigen::VectorXd& y, double lambda,
                                         const Eigen::VectorXd* warm_start = nullptr, LassoOptions options = {});

/// (1/(2n)) ||y - X b||^2 + lambda ||b||_1
double lasso_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta, double lambda);

struct PathOptions {
    int grid_size = 100;
    // Defaults to 0.01 when n > p and 0.05 otherwise.
    std::optional<double> lambda_min_ratio;
    // Scale columns to unit variance. Columns and response are always centred.
    bool standardize = true;
    // Explicit decreasing grid, on the standardized scale; overrides grid_size.
    std::vector<double> lambdas;
    LassoOptions solver;
};

double default_lambda_min_ratio(Index n, Index p);

/// Column centring/scaling used inside every fit.
struct Standardization {
    Eigen::VectorXd center;
    Eigen::VectorXd scale; // 1 for unscaled fits; 0 marks a constant column
    double y_center = 0.0;

    static Standardization compute(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool standardize);
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
    // Standardized-scale coefficients to original scale.
    Eigen::VectorXd to_original(const Eigen::VectorXd& beta_std) const;
};

struct LassoPath {
    std::vector<double> lambdas; // strictly decreasing, lambdas[0] = lambda_max
    Eigen::MatrixXd coef;        // p x grid, original scale
    Standardization standardization;

    int size() const { return static_cast<int>(lambdas.size()); }
    double intercept(int k) const;
    Eigen::VectorXd predict(int k, const Eigen::MatrixXd& x) const;
};

/// max_j |x_j' (y - ybar)| / n on the prepared design.
double lambda_max(const Eigen::MatrixXd& x_prepared, const Eigen::VectorXd& y_centered);

std::vector<double> lambda_grid(double lambda_max, int grid_size, double lambda_min_ratio);

LassoPath lasso_path(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const PathOptions& options = {});

struct CvLassoResult {
    double lambda_cv = 0.0;
    int best_index = 0;
    Eigen::VectorXd coefficients; // original scale, refit on all rows at lambda_cv
    std::vector<double> lambdas;
    std::vector<double> cv_error; // mean held-out squared error per lambda
    LassoPath path;               // full-data path
};

/// Fold label per row: a random permutation dealt into K nearly equal blocks.
std::vector<int> assign_folds(int n, int folds, Engine& engine);

CvLassoResult cv_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int folds, Engine& engine,
                       const PathOptions& options = {});

struct AdaptiveLassoResult {
    Eigen::VectorXd coefficients;           // original scale
    Eigen::VectorXd initial_coefficients;   // CV-Lasso fit, original scale
    bool degenerate_initial = false;        // initial fit all zero; no second stage
    double lambda_stage2 = 0.0;
    Standardization standardization;        // full-data standardization used for the weights
};

/// Two-stage adaptive Lasso: CV-Lasso initial fit, then a CV-tuned Lasso with
/// weights 1/|initial| on the standardized scale. Variables with a zero
/// initial coefficient are dropped from the second stage. The weighting is
/// realized by rescaling columns of the standardized design.
AdaptiveLassoResult adaptive_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int folds, Engine& engine,
                                   const PathOptions& options = {});

} // namespace msplit
