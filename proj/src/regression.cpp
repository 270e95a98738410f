#include "msplit/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "msplit/errors.hpp"

namespace msplit {

OlsFit ols_fit(const Eigen::MatrixXd& x_subset, const Eigen::VectorXd& y, IndexList subset) {
    const Index n_fit = x_subset.rows();
    const Index k = x_subset.cols();
    if (k < 1) throw ValidationError("ols_fit: empty column subset");
    if (n_fit != y.size()) throw ValidationError("ols_fit: design/response row mismatch");
    if (n_fit < k + 1) {
        throw ValidationError("ols_fit: need n_fit >= k + 1, got n_fit=" + std::to_string(n_fit)
                              + ", k=" + std::to_string(k));
    }
    if (subset.empty()) {
        subset.resize(static_cast<std::size_t>(k));
        std::iota(subset.begin(), subset.end(), 0);
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x_subset);
    const auto& r = qr.matrixR();
    const auto& perm = qr.colsPermutation().indices();
    const double r_max = std::abs(r(0, 0));

    IndexList offending;
    for (Index i = k - 1; i >= 0; --i) {
        if (!(std::abs(r(i, i)) >= kRankTolerance * r_max)) offending.push_back(perm(i));
    }
    if (r_max == 0.0 || !offending.empty()) {
        if (offending.empty()) {
            offending.resize(static_cast<std::size_t>(k));
            std::iota(offending.begin(), offending.end(), 0);
        }
        std::string cols;
        for (int c : offending) cols += (cols.empty() ? "" : ", ") + std::to_string(subset[static_cast<std::size_t>(c)] + 1);
        throw RankDeficiencyError("ols_fit: design is rank deficient (columns " + cols + ")", offending);
    }

    OlsFit fit;
    fit.subset = std::move(subset);
    fit.coefficients = qr.solve(y);
    const Eigen::VectorXd resid = y - x_subset * fit.coefficients;
    fit.df = static_cast<int>(n_fit - k);
    fit.sigma_hat_sq = resid.squaredNorm() / fit.df;

    // diag((X'X)^-1) = row norms of R^-1, in pivoted order
    const Eigen::MatrixXd r_top = r.topLeftCorner(k, k).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd r_inv =
        r_top.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
    fit.standard_errors.resize(k);
    for (Index i = 0; i < k; ++i) {
        fit.standard_errors(perm(i)) = std::sqrt(fit.sigma_hat_sq * r_inv.row(i).squaredNorm());
    }
    return fit;
}

OlsFit ols_fit(const Dataset& data, const IndexList& rows, const IndexList& columns) {
    return ols_fit(select_block(data.x(), rows, columns), select_rows(data.y(), rows), columns);
}

bool CoefficientPValues::any_degenerate() const {
    return std::any_of(degenerate.begin(), degenerate.end(), [](bool b) { return b; });
}

double two_sided_pvalue(double t, PValueMode mode, int df) {
    const double a = std::abs(t);
    double p = 1.0;
    if (mode == PValueMode::Normal) {
        p = std::erfc(a / std::sqrt(2.0));
    } else {
        if (df < 1) throw ValidationError("student-t p-value needs df >= 1");
        if (std::isinf(a)) return std::numeric_limits<double>::denorm_min();
        boost::math::students_t dist(static_cast<double>(df));
        p = 2.0 * boost::math::cdf(boost::math::complement(dist, a));
    }
    return std::clamp(p, std::numeric_limits<double>::denorm_min(), 1.0);
}

CoefficientPValues coefficient_pvalues(const OlsFit& fit, PValueMode mode) {
    const Index k = fit.coefficients.size();
    CoefficientPValues out;
    out.values.resize(k);
    out.degenerate.assign(static_cast<std::size_t>(k), false);
    for (Index j = 0; j < k; ++j) {
        const double beta = fit.coefficients(j);
        const double se = fit.standard_errors(j);
        if (se == 0.0) {
            out.degenerate[static_cast<std::size_t>(j)] = true;
            out.values(j) = beta == 0.0 ? 1.0 : std::numeric_limits<double>::denorm_min();
            continue;
        }
        out.values(j) = two_sided_pvalue(beta / se, mode, fit.df);
    }
    return out;
}

} // namespace msplit
