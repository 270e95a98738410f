#include "msplit/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "msplit/errors.hpp"

namespace msplit {

namespace {

inline double soft_threshold(double z, double t) {
    const double a = std::abs(z) - t;
    if (a <= 0.0) return 0.0;
    return z > 0.0 ? a : -a;
}

} // namespace

CoordinateDescent::CoordinateDescent(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                     Eigen::VectorXd penalty_factors, LassoOptions options)
    : x_(x), y_(y), penalty_(std::move(penalty_factors)), options_(options) {
    const Index n = x_.rows();
    const Index p = x_.cols();
    if (y_.size() != n) throw ValidationError("lasso: design/response row mismatch");
    if (penalty_.size() == 0) penalty_ = Eigen::VectorXd::Ones(p);
    if (penalty_.size() != p) throw ValidationError("lasso: penalty factor length mismatch");
    col_sq_ = x_.colwise().squaredNorm().transpose() / static_cast<double>(n);
    beta_ = Eigen::VectorXd::Zero(p);
    resid_ = y_;
    gradient_ = Eigen::VectorXd::Zero(p);
    const double y_scale = std::sqrt(y_.squaredNorm() / static_cast<double>(n));
    threshold_ = options_.tolerance * std::max(y_scale, std::numeric_limits<double>::min());
}

void CoordinateDescent::set_beta(const Eigen::VectorXd& beta) {
    if (beta.size() != beta_.size()) throw ValidationError("lasso: warm start length mismatch");
    beta_ = beta;
    resid_ = y_ - x_ * beta_;
    gradient_valid_ = false;
}

double CoordinateDescent::sweep(double lambda, const IndexList& coordinates, bool active_only) {
    const double inv_n = 1.0 / static_cast<double>(x_.rows());
    double max_change = 0.0;
    for (const int j : coordinates) {
        const double old = beta_(j);
        if (active_only && old == 0.0) continue;
        const double d = col_sq_(j);
        const double z = x_.col(j).dot(resid_) * inv_n + d * old;
        const double updated = soft_threshold(z, lambda * penalty_(j)) / d;
        const double delta = updated - old;
        if (delta != 0.0) {
            resid_.noalias() -= delta * x_.col(j);
            beta_(j) = updated;
            max_change = std::max(max_change, std::abs(delta) * std::sqrt(d));
        }
    }
    return max_change;
}

void CoordinateDescent::solve(double lambda) {
    long iter = 0;
    double change = 0.0;
    auto bump = [&] {
        ++sweeps_;
        if (++iter > options_.max_iter) {
            throw ConvergenceError("lasso coordinate descent did not converge at lambda=" + std::to_string(lambda)
                                       + " after " + std::to_string(options_.max_iter)
                                       + " sweeps (last max change " + std::to_string(change) + ")",
                                   iter, change);
        }
    };

    // Sequential strong rule: coordinates outside this set are only visited
    // through the KKT check below.
    const Index p = x_.cols();
    std::vector<char> in_strong(static_cast<std::size_t>(p), 0);
    IndexList strong;
    for (Index j = 0; j < p; ++j) {
        if (col_sq_(j) == 0.0 || std::isinf(penalty_(j))) continue;
        const bool keep = !gradient_valid_ || beta_(j) != 0.0
                          || std::abs(gradient_(j)) >= (2.0 * lambda - last_lambda_) * penalty_(j);
        if (keep) {
            in_strong[static_cast<std::size_t>(j)] = 1;
            strong.push_back(static_cast<int>(j));
        }
    }

    for (;;) {
        change = sweep(lambda, strong, false);
        bump();
        if (change <= threshold_) {
            gradient_.noalias() = x_.transpose() * resid_;
            gradient_ /= static_cast<double>(x_.rows());
            bool violated = false;
            for (Index j = 0; j < p; ++j) {
                if (in_strong[static_cast<std::size_t>(j)] || col_sq_(j) == 0.0 || std::isinf(penalty_(j))) continue;
                if (std::abs(gradient_(j)) > lambda * penalty_(j)) {
                    in_strong[static_cast<std::size_t>(j)] = 1;
                    strong.push_back(static_cast<int>(j));
                    violated = true;
                }
            }
            if (!violated) {
                gradient_valid_ = true;
                last_lambda_ = lambda;
                return;
            }
            std::sort(strong.begin(), strong.end());
            continue;
        }
        // iterate on the active set until it settles, then re-check everything
        int active_sweeps = 0;
        do {
            change = sweep(lambda, strong, true);
            bump();
            if (change <= threshold_) break;
            if (++active_sweeps == kSweepsBeforePolish && polish(lambda)) break;
        } while (true);
    }
}

bool CoordinateDescent::polish(double lambda) {
    IndexList active;
    for (Index j = 0; j < beta_.size(); ++j) {
        if (beta_(j) != 0.0) active.push_back(static_cast<int>(j));
    }
    const auto k = static_cast<Index>(active.size());
    if (k == 0 || k >= x_.rows()) return false;

    const double inv_n = 1.0 / static_cast<double>(x_.rows());
    const Eigen::MatrixXd xa = x_(Eigen::all, active);
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(k, k);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(xa.transpose(), inv_n);
    Eigen::VectorXd rhs = (xa.transpose() * y_) * inv_n;
    for (Index c = 0; c < k; ++c) {
        const Index j = active[static_cast<std::size_t>(c)];
        rhs(c) -= lambda * penalty_(j) * (beta_(j) > 0.0 ? 1.0 : -1.0);
    }
    const Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(gram);
    if (llt.info() != Eigen::Success) return false;
    const Eigen::VectorXd candidate = llt.solve(rhs);
    for (Index c = 0; c < k; ++c) {
        const double old = beta_(active[static_cast<std::size_t>(c)]);
        if (!std::isfinite(candidate(c)) || candidate(c) == 0.0 || (candidate(c) > 0.0) != (old > 0.0)) return false;
    }
    for (Index c = 0; c < k; ++c) beta_(active[static_cast<std::size_t>(c)]) = candidate(c);
    resid_ = y_ - xa * candidate;
    return true;
}

Eigen::VectorXd lasso_coordinate_descent(const Eigen::MatrixXd& x_std, const Eigen::VectorXd& y, double lambda,
                                         const Eigen::VectorXd* warm_start, LassoOptions options) {
    if (!(lambda > 0.0)) throw ValidationError("lasso: lambda must be positive");
    CoordinateDescent cd(x_std, y, {}, options);
    if (warm_start != nullptr) cd.set_beta(*warm_start);
    cd.solve(lambda);
    return cd.beta();
}

double lasso_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                       double lambda) {
    const double n = static_cast<double>(x.rows());
    return (y - x * beta).squaredNorm() / (2.0 * n) + lambda * beta.lpNorm<1>();
}

double default_lambda_min_ratio(Index n, Index p) { return n > p ? 0.01 : 0.05; }

Standardization Standardization::compute(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool standardize) {
    Standardization s;
    const double n = static_cast<double>(x.rows());
    s.center = x.colwise().mean().transpose();
    s.y_center = y.mean();
    s.scale = Eigen::VectorXd::Ones(x.cols());
    if (standardize) {
        for (Index j = 0; j < x.cols(); ++j) {
            const double var = (x.col(j).array() - s.center(j)).square().sum() / n;
            const double sd = std::sqrt(var);
            // numerically constant column
            s.scale(j) = sd > 1e-12 * std::max(1.0, std::abs(s.center(j))) ? sd : 0.0;
        }
    }
    return s;
}

Eigen::MatrixXd Standardization::apply(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
        if (scale(j) == 0.0) {
            out.col(j).setZero();
        } else {
            out.col(j) = (x.col(j).array() - center(j)) / scale(j);
        }
    }
    return out;
}

Eigen::VectorXd Standardization::to_original(const Eigen::VectorXd& beta_std) const {
    Eigen::VectorXd out(beta_std.size());
    for (Index j = 0; j < beta_std.size(); ++j) out(j) = scale(j) == 0.0 ? 0.0 : beta_std(j) / scale(j);
    return out;
}

double LassoPath::intercept(int k) const {
    return standardization.y_center - standardization.center.dot(coef.col(k));
}

Eigen::VectorXd LassoPath::predict(int k, const Eigen::MatrixXd& x) const {
    return (x * coef.col(k)).array() + intercept(k);
}

double lambda_max(const Eigen::MatrixXd& x_prepared, const Eigen::VectorXd& y_centered) {
    const double n = static_cast<double>(x_prepared.rows());
    double best = 0.0;
    for (Index j = 0; j < x_prepared.cols(); ++j) {
        best = std::max(best, std::abs(x_prepared.col(j).dot(y_centered) / n));
    }
    return best;
}

std::vector<double> lambda_grid(double lmax, int grid_size, double lambda_min_ratio) {
    if (grid_size < 2) throw ValidationError("lasso path: grid_size must be >= 2");
    if (!(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0)) {
        throw ValidationError("lasso path: lambda_min_ratio must lie in (0, 1)");
    }
    // a constant response still needs a valid decreasing grid
    lmax = std::max(lmax, std::numeric_limits<double>::min() * 1e6);
    std::vector<double> grid(static_cast<std::size_t>(grid_size));
    const double log_ratio = std::log(lambda_min_ratio);
    grid.front() = lmax;
    for (int k = 1; k < grid_size - 1; ++k) {
        grid[static_cast<std::size_t>(k)] = lmax * std::exp(log_ratio * k / (grid_size - 1));
    }
    grid.back() = lmax * lambda_min_ratio;
    return grid;
}

namespace {

struct PreparedProblem {
    Standardization standardization;
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
};

PreparedProblem prepare(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool standardize) {
    PreparedProblem prob;
    prob.standardization = Standardization::compute(x, y, standardize);
    prob.x = prob.standardization.apply(x);
    prob.y = y.array() - prob.standardization.y_center;
    return prob;
}

std::vector<double> resolve_grid(const PreparedProblem& prob, const PathOptions& options) {
    if (!options.lambdas.empty()) {
        for (std::size_t k = 1; k < options.lambdas.size(); ++k) {
            if (!(options.lambdas[k] < options.lambdas[k - 1])) {
                throw ValidationError("lasso path: lambdas must be strictly decreasing");
            }
        }
        if (!(options.lambdas.back() > 0.0)) throw ValidationError("lasso path: lambdas must be positive");
        return options.lambdas;
    }
    const double ratio = options.lambda_min_ratio.value_or(default_lambda_min_ratio(prob.x.rows(), prob.x.cols()));
    return lambda_grid(lambda_max(prob.x, prob.y), options.grid_size, ratio);
}

} // namespace

LassoPath lasso_path(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const PathOptions& options) {
    if (x.rows() != y.size()) throw ValidationError("lasso path: design/response row mismatch");
    PreparedProblem prob = prepare(x, y, options.standardize);
    LassoPath path;
    path.lambdas = resolve_grid(prob, options);
    path.coef.resize(x.cols(), static_cast<Index>(path.lambdas.size()));
    CoordinateDescent cd(prob.x, prob.y, {}, options.solver);
    for (std::size_t k = 0; k < path.lambdas.size(); ++k) {
        cd.solve(path.lambdas[k]);
        path.coef.col(static_cast<Index>(k)) = prob.standardization.to_original(cd.beta());
    }
    path.standardization = std::move(prob.standardization);
    return path;
}

std::vector<int> assign_folds(int n, int folds, Engine& engine) {
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) {
        std::uniform_int_distribution<int> pick(0, i);
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(pick(engine))]);
    }
    std::vector<int> fold(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        fold[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] =
            static_cast<int>(static_cast<long>(i) * folds / n);
    }
    return fold;
}

CvLassoResult cv_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int folds, Engine& engine,
                       const PathOptions& options) {
    const int n = static_cast<int>(x.rows());
    if (folds < 2) throw ValidationError("cv_lasso: need at least 2 folds");
    if (n < 2 * folds) {
        throw ValidationError("cv_lasso: need n >= 2K, got n=" + std::to_string(n) + ", K=" + std::to_string(folds));
    }

    CvLassoResult result;
    result.path = lasso_path(x, y, options);
    result.lambdas = result.path.lambdas;
    const auto grid = static_cast<Index>(result.lambdas.size());

    const std::vector<int> fold = assign_folds(n, folds, engine);
    Eigen::VectorXd sq_err = Eigen::VectorXd::Zero(grid);
    for (int f = 0; f < folds; ++f) {
        IndexList train, test;
        for (int i = 0; i < n; ++i) (fold[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
        const Eigen::MatrixXd x_test = select_rows(x, test);
        const Eigen::VectorXd y_test = select_rows(y, test);
        PreparedProblem prob = prepare(select_rows(x, train), select_rows(y, train), options.standardize);
        CoordinateDescent cd(prob.x, prob.y, {}, options.solver);
        for (Index k = 0; k < grid; ++k) {
            cd.solve(result.lambdas[static_cast<std::size_t>(k)]);
            const Eigen::VectorXd beta = prob.standardization.to_original(cd.beta());
            const double intercept = prob.standardization.y_center - prob.standardization.center.dot(beta);
            sq_err(k) += ((x_test * beta).array() + intercept - y_test.array()).square().sum();
        }
    }

    result.cv_error.resize(static_cast<std::size_t>(grid));
    Index best = 0;
    for (Index k = 0; k < grid; ++k) {
        result.cv_error[static_cast<std::size_t>(k)] = sq_err(k) / n;
        if (sq_err(k) < sq_err(best)) best = k;
    }
    result.best_index = static_cast<int>(best);
    result.lambda_cv = result.lambdas[static_cast<std::size_t>(best)];
    result.coefficients = result.path.coef.col(best);
    return result;
}

AdaptiveLassoResult adaptive_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int folds, Engine& engine,
                                   const PathOptions& options) {
    PathOptions initial_options = options;
    initial_options.standardize = true;
    initial_options.lambdas.clear();
    CvLassoResult initial = cv_lasso(x, y, folds, engine, initial_options);

    AdaptiveLassoResult result;
    result.initial_coefficients = initial.coefficients;
    result.standardization = initial.path.standardization;
    result.coefficients = Eigen::VectorXd::Zero(x.cols());

    const Standardization& st = result.standardization;
    IndexList kept;
    for (Index j = 0; j < x.cols(); ++j) {
        if (initial.coefficients(j) != 0.0) kept.push_back(static_cast<int>(j));
    }
    if (kept.empty()) {
        result.degenerate_initial = true;
        return result;
    }

    // weights 1/|b_std| become column multipliers |b_std|
    const auto k = static_cast<Index>(kept.size());
    Eigen::VectorXd multiplier(k);
    Eigen::MatrixXd x_weighted(x.rows(), k);
    for (Index c = 0; c < k; ++c) {
        const Index j = kept[static_cast<std::size_t>(c)];
        multiplier(c) = std::abs(initial.coefficients(j) * st.scale(j));
        x_weighted.col(c) = (x.col(j).array() - st.center(j)) / st.scale(j) * multiplier(c);
    }

    PathOptions stage2 = options;
    stage2.standardize = false;
    stage2.lambdas.clear();
    CvLassoResult second = cv_lasso(x_weighted, y, folds, engine, stage2);
    result.lambda_stage2 = second.lambda_cv;
    for (Index c = 0; c < k; ++c) {
        const Index j = kept[static_cast<std::size_t>(c)];
        result.coefficients(j) = second.coefficients(c) * multiplier(c) / st.scale(j);
    }
    return result;
}

} // namespace msplit
