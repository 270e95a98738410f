#include "msplit/screening.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "msplit/errors.hpp"

namespace msplit {

std::string to_string(ScreenerKind kind) {
    switch (kind) {
    case ScreenerKind::Fixed: return "fixed";
    case ScreenerKind::Cv: return "cv";
    case ScreenerKind::Adap: return "adap";
    case ScreenerKind::Random: return "random";
    }
    return "unknown";
}

ScreenerKind parse_screener(const std::string& name) {
    if (name == "fixed") return ScreenerKind::Fixed;
    if (name == "cv") return ScreenerKind::Cv;
    if (name == "adap") return ScreenerKind::Adap;
    if (name == "random") return ScreenerKind::Random;
    throw ValidationError("unknown screener '" + name + "' (expected fixed, cv, adap or random)");
}

ScreenedSet screen_fixed(const LassoPath& path, int target_size) {
    const Index p = path.coef.rows();
    const Index grid = path.coef.cols();
    std::vector<int> count(static_cast<std::size_t>(p), 0);
    std::vector<Index> first(static_cast<std::size_t>(p), grid);
    for (Index j = 0; j < p; ++j) {
        for (Index k = 0; k < grid; ++k) {
            if (path.coef(j, k) != 0.0) {
                ++count[static_cast<std::size_t>(j)];
                first[static_cast<std::size_t>(j)] = std::min(first[static_cast<std::size_t>(j)], k);
            }
        }
    }
    IndexList active;
    for (Index j = 0; j < p; ++j) {
        if (count[static_cast<std::size_t>(j)] > 0) active.push_back(static_cast<int>(j));
    }
    std::sort(active.begin(), active.end(), [&](int a, int b) {
        const auto ua = static_cast<std::size_t>(a), ub = static_cast<std::size_t>(b);
        if (count[ua] != count[ub]) return count[ua] > count[ub];
        if (first[ua] != first[ub]) return first[ua] < first[ub];
        return a < b;
    });

    ScreenedSet set;
    set.method = ScreenerKind::Fixed;
    set.coefficients = path.coef.col(grid - 1);
    set.lambda = path.lambdas.back();
    if (static_cast<int>(active.size()) < target_size) {
        set.undersized = true;
    } else {
        active.resize(static_cast<std::size_t>(std::max(target_size, 0)));
    }
    set.ranking = active;
    set.indices = active;
    std::sort(set.indices.begin(), set.indices.end());
    set.empty_support = set.indices.empty();
    return set;
}

ScreenedSet cap_screened_set(ScreenedSet set, const Eigen::VectorXd& coefficients, int n_out) {
    const int cap = n_out / 2;
    if (set.size() <= cap) return set;
    IndexList order = set.indices;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double ca = std::abs(coefficients(a)), cb = std::abs(coefficients(b));
        if (ca != cb) return ca > cb;
        return a < b;
    });
    order.resize(static_cast<std::size_t>(std::max(cap, 0)));
    std::sort(order.begin(), order.end());
    set.indices = std::move(order);
    set.truncated = true;
    set.empty_support = set.indices.empty();
    return set;
}

namespace {

IndexList support_of(const Eigen::VectorXd& coef) {
    IndexList out;
    for (Index j = 0; j < coef.size(); ++j) {
        if (coef(j) != 0.0) out.push_back(static_cast<int>(j));
    }
    return out;
}

} // namespace

ScreenedSet screen_cv(const Eigen::MatrixXd& x_in, const Eigen::VectorXd& y_in, int n_out, Engine& engine,
                      const ScreenOptions& options) {
    CvLassoResult cv = cv_lasso(x_in, y_in, options.folds, engine, options.path);
    ScreenedSet set;
    set.method = ScreenerKind::Cv;
    set.coefficients = cv.coefficients;
    set.lambda = cv.lambda_cv;
    set.cv_curve = cv.cv_error;
    set.indices = support_of(cv.coefficients);
    set.empty_support = set.indices.empty();
    return cap_screened_set(std::move(set), cv.coefficients, n_out);
}

ScreenedSet screen_adap(const Eigen::MatrixXd& x_in, const Eigen::VectorXd& y_in, int n_out, Engine& engine,
                        const ScreenOptions& options) {
    AdaptiveLassoResult fit = adaptive_lasso(x_in, y_in, options.folds, engine, options.path);
    ScreenedSet set;
    set.method = ScreenerKind::Adap;
    set.coefficients = fit.coefficients;
    set.lambda = fit.lambda_stage2;
    set.degenerate_initial = fit.degenerate_initial;
    set.indices = support_of(fit.coefficients);
    set.empty_support = set.indices.empty();
    return cap_screened_set(std::move(set), fit.coefficients, n_out);
}

ScreenedSet screen_random(int p, int size, int n_out, Engine& engine) {
    const int k = std::clamp(std::min(size, n_out / 2), 0, p);
    ScreenedSet set;
    set.method = ScreenerKind::Random;
    set.indices = random_subset(p, k, engine);
    set.coefficients = Eigen::VectorXd::Zero(p);
    set.empty_support = set.indices.empty();
    set.truncated = k < size;
    return set;
}

ScreenedSet screen(const Eigen::MatrixXd& x_in, const Eigen::VectorXd& y_in, int n_full, int n_out, Engine& engine,
                   const ScreenOptions& options) {
    switch (options.kind) {
    case ScreenerKind::Fixed: {
        const int target = options.fixed_target > 0 ? options.fixed_target : default_fixed_target(n_full);
        ScreenedSet set = screen_fixed(lasso_path(x_in, y_in, options.path), target);
        const Eigen::VectorXd coef = set.coefficients;
        return cap_screened_set(std::move(set), coef, n_out);
    }
    case ScreenerKind::Cv: return screen_cv(x_in, y_in, n_out, engine, options);
    case ScreenerKind::Adap: return screen_adap(x_in, y_in, n_out, engine, options);
    case ScreenerKind::Random:
        return screen_random(static_cast<int>(x_in.cols()), options.random_size, n_out, engine);
    }
    throw ValidationError("unknown screener");
}

} // namespace msplit
