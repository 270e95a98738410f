#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msplit/core.hpp"
#include "msplit/lasso.hpp"

namespace msplit {

// Random is not a Lasso screener: it draws a uniformly random set of fixed
// size, which makes every variable a null for calibration runs.
enum class ScreenerKind { Fixed, Cv, Adap, Random };

std::string to_string(ScreenerKind kind);
ScreenerKind parse_screener(const std::string& name);

struct ScreenedSet {
    IndexList indices; // ascending
    ScreenerKind method = ScreenerKind::Adap;
    Eigen::VectorXd coefficients; // length p; the fit the set was read from

    // metadata
    double lambda = 0.0;             // chosen penalty (cv: lambda_cv, adap: stage-two lambda)
    std::vector<double> cv_curve;    // cv: held-out error per grid point
    IndexList ranking;               // fixed: selected variables, best first
    bool undersized = false;         // fixed: fewer ever-active variables than the target
    bool truncated = false;          // cut back by cap_screened_set
    bool empty_support = false;
    bool degenerate_initial = false; // adap: all-zero initial fit

    int size() const { return static_cast<int>(indices.size()); }
};

struct ScreenOptions {
    ScreenerKind kind = ScreenerKind::Adap;
    int folds = 10;
    int fixed_target = 0; // 0: floor(n_full / 6)
    int random_size = 16;
    PathOptions path;
};

inline int default_fixed_target(int n_full) { return n_full / 6; }

/// Top `target_size` variables by number of grid points with a nonzero
/// coefficient. Ties go to the variable that activated first (larger lambda),
/// then to the lower index.
ScreenedSet screen_fixed(const LassoPath& path, int target_size);

ScreenedSet screen_cv(const Eigen::MatrixXd& x_in, const Eigen::VectorXd& y_in, int n_out, Engine& engine,
                      const ScreenOptions& options = {});
ScreenedSet screen_adap(const Eigen::MatrixXd& x_in, const Eigen::VectorXd& y_in, int n_out, Engine& engine,
                        const ScreenOptions& options = {});
ScreenedSet screen_random(int p, int size, int n_out, Engine& engine);

/// Enforces |set| <= floor(n_out / 2) by keeping the largest |coefficient|
/// (ties to the lower index).
ScreenedSet cap_screened_set(ScreenedSet set, const Eigen::VectorXd& coefficients, int n_out);

/// Dispatch on options.kind. `n_full` is the size of the whole sample (used by
/// the fixed screener's target), `n_out` the testing-half size.
ScreenedSet screen(const Eigen::MatrixXd& x_in, const Eigen::VectorXd& y_in, int n_full, int n_out, Engine& engine,
                   const ScreenOptions& options);

} // namespace msplit
