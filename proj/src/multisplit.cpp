#include "msplit/multisplit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <numeric>

#include "msplit/errors.hpp"

namespace msplit {

namespace {

// Slack for gamma * B landing on an integer in floating point.
constexpr double kRankSlack = 1e-10;

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::vector<double> sorted_column(const Eigen::MatrixXd& m, Index j) {
    std::vector<double> col(static_cast<std::size_t>(m.rows()));
    for (Index b = 0; b < m.rows(); ++b) col[static_cast<std::size_t>(b)] = m(b, j);
    std::sort(col.begin(), col.end());
    return col;
}

int smallest_admissible_rank(int B, double gamma_min) {
    return static_cast<int>(std::floor(gamma_min * B + kRankSlack)) + 1;
}

} // namespace

SplitRow split_pvalues(const Dataset& data, const SplitPlan& plan, const ScreenOptions& screen_options,
                       PValueMode mode, const RngSpec& rng) {
    const int p = data.p();
    const int n_out = static_cast<int>(plan.out_indices.size());
    Engine folds = rng.engine(Stream::CvFolds, static_cast<std::uint64_t>(plan.split_id - 1));

    const Eigen::MatrixXd x_in = select_rows(data.x(), plan.in_indices);
    const Eigen::VectorXd y_in = select_rows(data.y(), plan.in_indices);
    const ScreenedSet set = screen(x_in, y_in, data.n(), n_out, folds, screen_options);

    SplitRow row;
    row.adjusted = Eigen::VectorXd::Ones(p);
    row.meta.screened = set.indices;
    row.meta.screened_size = set.size();
    row.meta.truncated = set.truncated;
    row.meta.undersized = set.undersized;
    if (set.indices.empty()) {
        row.meta.empty_screen = true;
        row.uncapped = Eigen::VectorXd::Constant(p, kNeverRejected);
        return row;
    }

    const double factor = static_cast<double>(set.size());
    row.uncapped = Eigen::VectorXd::Constant(p, kNeverRejected);

    IndexList columns = set.indices;
    while (!columns.empty()) {
        try {
            const OlsFit fit = ols_fit(data, plan.out_indices, columns);
            const CoefficientPValues raw = coefficient_pvalues(fit, mode);
            row.meta.degenerate_pvalue = raw.any_degenerate();
            for (std::size_t c = 0; c < columns.size(); ++c) {
                const double adj = raw.values(static_cast<Index>(c)) * factor;
                row.uncapped(columns[c]) = adj;
                row.adjusted(columns[c]) = std::min(adj, 1.0);
            }
            break;
        } catch (const RankDeficiencyError& e) {
            // drop the offending column the screener trusted least
            auto weakest = std::min_element(
                e.offending_columns.begin(), e.offending_columns.end(), [&](int a, int b) {
                    const double ca = std::abs(set.coefficients(columns[static_cast<std::size_t>(a)]));
                    const double cb = std::abs(set.coefficients(columns[static_cast<std::size_t>(b)]));
                    if (ca != cb) return ca < cb;
                    return columns[static_cast<std::size_t>(a)] < columns[static_cast<std::size_t>(b)];
                });
            columns.erase(columns.begin() + *weakest);
            ++row.meta.dropped_for_rank;
        }
    }
    return row;
}

namespace {

PValueMatrix assemble(std::vector<SplitRow>& rows, int p) {
    PValueMatrix m;
    const auto B = static_cast<Index>(rows.size());
    m.values.resize(B, p);
    m.uncapped.resize(B, p);
    m.split_meta.reserve(rows.size());
    for (Index b = 0; b < B; ++b) {
        m.values.row(b) = rows[static_cast<std::size_t>(b)].adjusted.transpose();
        m.uncapped.row(b) = rows[static_cast<std::size_t>(b)].uncapped.transpose();
        m.split_meta.push_back(std::move(rows[static_cast<std::size_t>(b)].meta));
    }
    return m;
}

} // namespace

PValueMatrix multi_split_pvalues_serial(const Dataset& data, const MultiSplitOptions& options, const RngSpec& rng) {
    const std::vector<SplitPlan> plans = make_splits(data.n(), options.B, rng);
    std::vector<SplitRow> rows;
    rows.reserve(plans.size());
    for (const SplitPlan& plan : plans) {
        rows.push_back(split_pvalues(data, plan, options.screen, options.pvalue_mode, rng));
    }
    return assemble(rows, data.p());
}

PValueMatrix multi_split_pvalues(const Dataset& data, const MultiSplitOptions& options, const RngSpec& rng) {
    const std::vector<SplitPlan> plans = make_splits(data.n(), options.B, rng);
    const int B = static_cast<int>(plans.size());
    std::vector<SplitRow> rows(plans.size());
    std::vector<std::exception_ptr> errors(plans.size());

#pragma omp parallel for schedule(dynamic)
    for (int b = 0; b < B; ++b) {
        try {
            rows[static_cast<std::size_t>(b)] =
                split_pvalues(data, plans[static_cast<std::size_t>(b)], options.screen, options.pvalue_mode, rng);
        } catch (...) {
            errors[static_cast<std::size_t>(b)] = std::current_exception();
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return assemble(rows, data.p());
}

int quantile_rank(int B, double gamma) {
    const int k = static_cast<int>(std::ceil(gamma * B - kRankSlack));
    return std::clamp(k, 1, B);
}

double empirical_quantile(std::span<const double> sorted_values, double gamma) {
    if (sorted_values.empty()) throw ValidationError("empirical_quantile: empty sample");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ValidationError("empirical_quantile: gamma must lie in (0, 1]");
    const int B = static_cast<int>(sorted_values.size());
    return sorted_values[static_cast<std::size_t>(quantile_rank(B, gamma) - 1)];
}

double quantile_pvalue(std::span<const double> sorted_column, double gamma) {
    return std::min(1.0, empirical_quantile(sorted_column, gamma) / gamma);
}

double adaptive_infimum(std::span<const double> sorted_column, double gamma_min) {
    const int B = static_cast<int>(sorted_column.size());
    if (B == 0) throw ValidationError("adaptive_infimum: empty sample");
    const int k_min = smallest_admissible_rank(B, gamma_min);
    double best = std::numeric_limits<double>::infinity();
    for (int k = k_min; k <= B; ++k) {
        best = std::min(best, sorted_column[static_cast<std::size_t>(k - 1)] * B / k);
    }
    return best;
}

AggregatedPValues aggregate_fixed_gamma(const PValueMatrix& matrix, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("aggregate_fixed_gamma: gamma must lie in (0, 1)");
    AggregatedPValues agg;
    agg.mode = AggregatedPValues::Mode::FixedGamma;
    agg.gamma = gamma;
    agg.values.resize(matrix.p());
    for (Index j = 0; j < matrix.p(); ++j) {
        agg.values(j) = quantile_pvalue(sorted_column(matrix.values, j), gamma);
    }
    return agg;
}

namespace {

AggregatedPValues adaptive(const Eigen::MatrixXd& values, double gamma_min, bool capped) {
    if (!(gamma_min > 0.0 && gamma_min < 1.0)) {
        throw ValidationError("aggregate_adaptive: gamma_min must lie in (0, 1)");
    }
    AggregatedPValues agg;
    agg.mode = AggregatedPValues::Mode::Adaptive;
    agg.gamma = gamma_min;
    agg.capped = capped;
    agg.values.resize(values.cols());
    const double factor = adaptive_factor(gamma_min);
    for (Index j = 0; j < values.cols(); ++j) {
        const double v = factor * adaptive_infimum(sorted_column(values, j), gamma_min);
        agg.values(j) = capped ? std::min(1.0, v) : v;
    }
    return agg;
}

} // namespace

AggregatedPValues aggregate_adaptive(const PValueMatrix& matrix, double gamma_min) {
    return adaptive(matrix.values, gamma_min, true);
}

AggregatedPValues aggregate_adaptive_uncapped(const PValueMatrix& matrix, double gamma_min) {
    return adaptive(matrix.uncapped, gamma_min, false);
}

std::string SelectionRule::name() const {
    switch (kind) {
    case Kind::Fwer: return "fwer";
    case Kind::Fdr: return corrected ? "fdr-corrected" : "fdr";
    case Kind::Ev: return "ev";
    case Kind::SingleSplit: return "single-split";
    case Kind::ClassicBh: return "classic-bh";
    case Kind::AdaptiveLasso: return "adaptive-lasso";
    }
    return "unknown";
}

std::string SelectionRule::control_target(int p) const {
    switch (kind) {
    case Kind::Fwer: return "FWER <= " + format_number(level);
    case Kind::Fdr:
        return "FDR <= " + format_number(corrected ? level : level * harmonic_sum(p));
    case Kind::Ev: return "E[V] <= " + format_number(level * K);
    case Kind::SingleSplit: return "FWER <= " + format_number(level) + " (single split)";
    case Kind::ClassicBh: return "FDR <= " + format_number(level) + " (full-data OLS)";
    case Kind::AdaptiveLasso: return "none";
    }
    return "";
}

SplitRow PValueMatrix::row(int b) const {
    return {values.row(b).transpose(), uncapped.row(b).transpose(), split_meta.at(static_cast<std::size_t>(b))};
}

double harmonic_sum(int p) {
    double s = 0.0;
    for (int i = p; i >= 1; --i) s += 1.0 / i;
    return s;
}

IndexList step_up(const Eigen::VectorXd& pvalues, double level_per_rank) {
    const auto p = static_cast<int>(pvalues.size());
    IndexList order(static_cast<std::size_t>(p));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (pvalues(a) != pvalues(b)) return pvalues(a) < pvalues(b);
        return a < b;
    });
    int h = 0;
    for (int i = 1; i <= p; ++i) {
        if (pvalues(order[static_cast<std::size_t>(i - 1)]) <= i * level_per_rank) h = i;
    }
    IndexList selected(order.begin(), order.begin() + h);
    std::sort(selected.begin(), selected.end());
    return selected;
}

SelectionReport fwer_select(const AggregatedPValues& agg, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("fwer_select: alpha must lie in (0, 1)");
    SelectionReport report;
    report.rule = {SelectionRule::Kind::Fwer, alpha, false, 1.0};
    report.pvalues = agg.values;
    report.effective_level = alpha;
    for (Index j = 0; j < agg.values.size(); ++j) {
        if (agg.values(j) <= alpha) report.selected.push_back(static_cast<int>(j));
    }
    return report;
}

SelectionReport fdr_select(const AggregatedPValues& agg, double q, bool corrected) {
    if (!(q > 0.0 && q < 1.0)) throw ValidationError("fdr_select: q must lie in (0, 1)");
    SelectionReport report;
    report.rule = {SelectionRule::Kind::Fdr, q, corrected, 1.0};
    report.pvalues = agg.values;
    const auto p = static_cast<int>(agg.values.size());
    report.effective_level = corrected ? q / harmonic_sum(p) : q;
    report.selected = step_up(agg.values, report.effective_level);
    return report;
}

SelectionReport ev_select(const AggregatedPValues& uncapped, double alpha, double K) {
    if (!(K >= 1.0)) throw ValidationError("ev_select: K must be >= 1");
    if (!(alpha > 0.0)) throw ValidationError("ev_select: alpha must be positive");
    SelectionReport report;
    report.rule = {SelectionRule::Kind::Ev, alpha, false, K};
    report.pvalues = uncapped.values;
    report.effective_level = alpha;
    for (Index j = 0; j < uncapped.values.size(); ++j) {
        if (uncapped.values(j) / K <= alpha) report.selected.push_back(static_cast<int>(j));
    }
    return report;
}

SelectionReport single_split_from_row(const SplitRow& row, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("single_split_select: alpha must lie in (0, 1)");
    SelectionReport report;
    report.rule = {SelectionRule::Kind::SingleSplit, alpha, false, 1.0};
    report.pvalues = row.adjusted;
    report.effective_level = alpha;
    for (int j : row.meta.screened) {
        if (row.adjusted(j) <= alpha) report.selected.push_back(j);
    }
    report.splits_empty = row.meta.empty_screen ? 1 : 0;
    report.splits_truncated = row.meta.truncated ? 1 : 0;
    report.splits_rank_repaired = row.meta.dropped_for_rank > 0 ? 1 : 0;
    report.splits_degenerate_pvalue = row.meta.degenerate_pvalue ? 1 : 0;
    return report;
}

SelectionReport single_split_select(const Dataset& data, const ScreenOptions& screen, double alpha,
                                    const RngSpec& rng, PValueMode mode) {
    const SplitPlan plan = make_splits(data.n(), 1, rng).front();
    return single_split_from_row(split_pvalues(data, plan, screen, mode, rng), alpha);
}

void attach_split_flags(SelectionReport& report, const PValueMatrix& matrix) {
    report.splits_empty = report.splits_truncated = report.splits_rank_repaired = 0;
    report.splits_degenerate_pvalue = 0;
    for (const SplitMeta& m : matrix.split_meta) {
        report.splits_empty += m.empty_screen ? 1 : 0;
        report.splits_truncated += m.truncated ? 1 : 0;
        report.splits_rank_repaired += m.dropped_for_rank > 0 ? 1 : 0;
        report.splits_degenerate_pvalue += m.degenerate_pvalue ? 1 : 0;
    }
}

double ecdf_bound(double p, double alpha, double gamma_min) {
    return std::max(gamma_min, adaptive_factor(gamma_min) / alpha * p);
}

EcdfCrossing ecdf_crossing_check(std::span<const double> column, double alpha, double gamma_min) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("ecdf_crossing_check: alpha must lie in (0, 1)");
    std::vector<double> sorted(column.begin(), column.end());
    std::sort(sorted.begin(), sorted.end());
    const int B = static_cast<int>(sorted.size());
    const double factor = adaptive_factor(gamma_min);
    const int k_min = smallest_admissible_rank(B, gamma_min);

    EcdfCrossing out;
    out.ecdf.reserve(sorted.size());
    for (int k = 1; k <= B; ++k) {
        const double value = sorted[static_cast<std::size_t>(k - 1)];
        out.ecdf.emplace_back(value, static_cast<double>(k) / B);
        // the ECDF reaches k/B at P_(k); it sits above the bound there iff
        // k/B > gamma_min and P_(k) <= alpha (k/B) / factor
        if (k >= k_min && value <= alpha * (static_cast<double>(k) / B) / factor) out.crosses = true;
    }
    return out;
}

} // namespace msplit
