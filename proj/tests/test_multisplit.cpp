#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>

#include "helpers.hpp"
#include "msplit/errors.hpp"
#include "msplit/multisplit.hpp"

using namespace msplit;

namespace {

PValueMatrix matrix_from(const Eigen::MatrixXd& values) {
    PValueMatrix m;
    m.values = values;
    m.uncapped = values;
    m.split_meta.resize(static_cast<std::size_t>(values.rows()));
    return m;
}

Eigen::MatrixXd random_matrix(int B, int p, Engine& e) {
    Eigen::MatrixXd m(B, p);
    for (int j = 0; j < p; ++j) {
        const auto col = testing::pvalue_column(B, e);
        for (int b = 0; b < B; ++b) m(b, j) = col[static_cast<std::size_t>(b)];
    }
    return m;
}

// inf over a uniform gamma grid of q_gamma / gamma, evaluated directly.
double grid_infimum(const std::vector<double>& sorted_col, double gamma_min, int steps) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 1; i <= steps; ++i) {
        const double gamma = gamma_min + (1.0 - gamma_min) * i / steps;
        best = std::min(best, empirical_quantile(sorted_col, gamma) / gamma);
    }
    return best;
}

Dataset signal_data(int n, int p, int s, double strength, std::uint64_t seed) {
    Engine e = testing::engine(seed);
    const Eigen::MatrixXd x = testing::gaussian_matrix(n, p, e);
    const Eigen::VectorXd y = strength * x.leftCols(s).rowwise().sum() + testing::gaussian_vector(n, e);
    return Dataset(y, x);
}

} // namespace

TEST_SUITE("multisplit") {

TEST_CASE("split p-values are Bonferroni-adjusted OLS p-values on the testing half") {
    const Dataset d = signal_data(40, 12, 2, 1.0, 1);
    ScreenOptions opt;
    opt.kind = ScreenerKind::Random;
    opt.random_size = 4;
    const RngSpec rng{17};
    const SplitPlan plan = make_splits(d.n(), 3, rng)[2];
    const SplitRow row = split_pvalues(d, plan, opt, PValueMode::Normal, rng);

    // the random screener draws from the split's fold stream
    Engine folds = rng.engine(Stream::CvFolds, 2);
    const IndexList screened = random_subset(12, 4, folds);
    REQUIRE(row.meta.screened == screened);

    const Eigen::MatrixXd xo = select_block(d.x(), plan.out_indices, screened);
    const Eigen::VectorXd yo = select_rows(d.y(), plan.out_indices);
    const Eigen::MatrixXd inv = (xo.transpose() * xo).inverse();
    const Eigen::VectorXd b = inv * xo.transpose() * yo;
    const double s2 = (yo - xo * b).squaredNorm() / static_cast<double>(xo.rows() - 4);
    for (int j = 0; j < 12; ++j) {
        const auto it = std::find(screened.begin(), screened.end(), j);
        if (it == screened.end()) {
            CHECK(row.adjusted(j) == 1.0);
            CHECK(row.uncapped(j) == kNeverRejected);
            continue;
        }
        const auto c = static_cast<Index>(it - screened.begin());
        const double raw = std::erfc(std::abs(b(c)) / std::sqrt(s2 * inv(c, c)) / std::sqrt(2.0));
        CHECK(row.uncapped(j) == doctest::Approx(4 * raw).epsilon(1e-9));
        CHECK(row.adjusted(j) == doctest::Approx(std::min(1.0, 4 * raw)).epsilon(1e-9));
    }
}

TEST_CASE("an empty screen gives ones and never-rejected entries") {
    const Dataset d = signal_data(20, 5, 1, 1.0, 2);
    ScreenOptions opt;
    opt.kind = ScreenerKind::Random;
    opt.random_size = 0;
    const RngSpec rng{1};
    const SplitRow row = split_pvalues(d, make_splits(20, 1, rng)[0], opt, PValueMode::Normal, rng);
    CHECK(row.meta.empty_screen);
    CHECK(row.adjusted.isOnes(0.0));
    CHECK(row.uncapped.array().isInf().all());
}

TEST_CASE("duplicated columns are repaired by dropping one") {
    Engine e = testing::engine(3);
    Eigen::MatrixXd x = testing::gaussian_matrix(24, 3, e);
    x.col(2) = x.col(0);
    const Dataset d(x.col(0) + testing::gaussian_vector(24, e), x);
    ScreenOptions opt;
    opt.kind = ScreenerKind::Random;
    opt.random_size = 3;
    const RngSpec rng{4};
    const SplitRow row = split_pvalues(d, make_splits(24, 1, rng)[0], opt, PValueMode::Normal, rng);
    CHECK(row.meta.dropped_for_rank == 1);
    CHECK(row.meta.screened_size == 3);
    CHECK((std::isinf(row.uncapped(0)) != std::isinf(row.uncapped(2))));
    CHECK(std::isfinite(row.uncapped(1)));
}

TEST_CASE("type-1 quantile") {
    const std::vector<double> v{0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.10};
    CHECK(empirical_quantile(v, 0.5) == 0.05);
    CHECK(empirical_quantile(v, 0.3) == 0.03);
    CHECK(empirical_quantile(v, 0.31) == 0.04);
    CHECK(empirical_quantile(v, 0.01) == 0.01);
    CHECK(empirical_quantile(v, 1.0) == 0.10);
    CHECK(quantile_pvalue(v, 0.5) == doctest::Approx(0.1));
    CHECK(quantile_rank(50, 0.05) == 3);
    CHECK(quantile_rank(20, 0.05) == 1);
    CHECK(quantile_rank(7, 1.0 / 7 * 3) == 3);
    CHECK_THROWS_AS(empirical_quantile(v, 0.0), ValidationError);
    CHECK_THROWS_AS(empirical_quantile({}, 0.5), ValidationError);
}

TEST_CASE("fixed-gamma aggregation") {
    Eigen::MatrixXd m(4, 2);
    m << 0.01, 1.0,
         0.02, 1.0,
         0.50, 0.004,
         1.00, 1.0;
    const AggregatedPValues agg = aggregate_fixed_gamma(matrix_from(m), 0.5);
    CHECK(agg.values(0) == doctest::Approx(0.04));
    CHECK(agg.values(1) == 1.0);
    CHECK_THROWS_AS(aggregate_fixed_gamma(matrix_from(m), 1.0), ValidationError);
}

TEST_CASE("adaptive aggregation examples") {
    CHECK(adaptive_factor(0.05) == doctest::Approx(3.995732273554).epsilon(1e-12));

    // B = 50, all 0.01: inf is reached at k = B
    std::vector<double> flat(50, 0.01);
    CHECK(adaptive_infimum(flat, 0.05) == doctest::Approx(0.01));

    // 10 tiny values then ones: k = 10 gives 1e-4 * 50 / 10
    std::vector<double> col(50, 1.0);
    for (int i = 0; i < 10; ++i) col[static_cast<std::size_t>(i)] = 1e-4;
    CHECK(adaptive_infimum(col, 0.05) == doctest::Approx(5e-4));
    Eigen::MatrixXd m(50, 1);
    for (int b = 0; b < 50; ++b) m(b, 0) = col[static_cast<std::size_t>(b)];
    CHECK(aggregate_adaptive(matrix_from(m), 0.05).values(0) == doctest::Approx(5e-4 * adaptive_factor(0.05)));

    // two tiny values are below the admissible rank floor(0.05 * 50) + 1 = 3
    std::vector<double> two(50, 1.0);
    two[0] = two[1] = 1e-8;
    CHECK(adaptive_infimum(two, 0.05) == doctest::Approx(1.0));

    // capped vs uncapped
    PValueMatrix big = matrix_from(Eigen::MatrixXd::Constant(10, 1, 0.5));
    CHECK(aggregate_adaptive(big, 0.05).values(0) == 1.0);
    CHECK(aggregate_adaptive_uncapped(big, 0.05).values(0) == doctest::Approx(0.5 * adaptive_factor(0.05)));
}

TEST_CASE("closed form equals a dense gamma grid when the grid hits every rank") {
    // pairs where gamma = k/B lies on the grid gamma_min + i (1 - gamma_min) / 1e5
    struct Case { int B; double gamma_min; };
    Engine e = testing::engine(5);
    for (Case c : {Case{50, 0.2}, Case{21, 1.0 / 21}, Case{50, 0.5}}) {
        for (int trial = 0; trial < 5; ++trial) {
            const auto col = testing::sorted(testing::pvalue_column(c.B, e));
            const double closed = adaptive_infimum(col, c.gamma_min);
            const double grid = grid_infimum(col, c.gamma_min, 100000);
            CHECK(std::abs(closed - grid) <= 1e-9 * std::max(1.0, closed));
        }
    }
}

TEST_CASE("dense gamma grid never undercuts the closed form") {
    // at gamma_min = 0.05, B = 50 the grid misses k/B; the gap shrinks with the step
    Engine e = testing::engine(6);
    const int steps = 100000;
    for (int trial = 0; trial < 20; ++trial) {
        const auto col = testing::sorted(testing::pvalue_column(50, e));
        const double closed = adaptive_infimum(col, 0.05);
        const double grid = grid_infimum(col, 0.05, steps);
        CHECK(grid >= closed * (1 - 1e-12));
        // q is flat between breakpoints, so the grid overshoots k/B by at most one step
        const double step = 0.95 / steps;
        CHECK(grid <= closed * (1.0 + 50 * step) + 1e-15);
    }
}

TEST_CASE("closed form, dense evaluation and ECDF crossing agree on dyadic columns") {
    // every nondecreasing column with entries in {1/8, ..., 8/8}, B <= 6;
    // all breakpoints k/B and gamma_min = a/64 lie on the grid m / (64 B)
    long checked = 0;
    for (int B = 1; B <= 6; ++B) {
        std::vector<double> col(static_cast<std::size_t>(B));
        std::function<void(int, int)> rec = [&](int pos, int lo) {
            if (pos == B) {
                for (int a : {1, 3, 8, 16, 32}) {
                    const double gamma_min = a / 64.0;
                    double brute = std::numeric_limits<double>::infinity();
                    for (int m = 1; m <= 64 * B; ++m) {
                        const double gamma = static_cast<double>(m) / (64.0 * B);
                        if (gamma <= gamma_min) continue;
                        brute = std::min(brute, empirical_quantile(col, gamma) / gamma);
                    }
                    const double closed = adaptive_infimum(col, gamma_min);
                    REQUIRE(std::abs(closed - brute) < 1e-12);
                    for (int al : {1, 2, 5, 13, 40}) {
                        const double alpha = al / 64.0;
                        const bool rejects = std::min(1.0, adaptive_factor(gamma_min) * closed) <= alpha;
                        REQUIRE(ecdf_crossing_check(col, alpha, gamma_min).crosses == rejects);
                    }
                    ++checked;
                }
                return;
            }
            for (int v = lo; v <= 8; ++v) {
                col[static_cast<std::size_t>(pos)] = v / 8.0;
                rec(pos + 1, v);
            }
        };
        rec(0, 1);
    }
    CHECK(checked > 5000);
}

TEST_CASE("ECDF crossing matches the aggregate on random columns") {
    Engine e = testing::engine(7);
    int crossings = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int B = 1 + static_cast<int>(e() % 100);
        const auto col = testing::pvalue_column(B, e);
        Eigen::MatrixXd m(B, 1);
        for (int b = 0; b < B; ++b) m(b, 0) = col[static_cast<std::size_t>(b)];
        const double P = aggregate_adaptive(matrix_from(m), 0.05).values(0);
        const bool crosses = ecdf_crossing_check(col, 0.05, 0.05).crosses;
        CHECK(crosses == (P <= 0.05));
        crossings += crosses;
    }
    CHECK(crossings > 0);
    CHECK(crossings < 1000);
}

TEST_CASE("ECDF bound") {
    CHECK(ecdf_bound(0.0, 0.05, 0.05) == 0.05);
    CHECK(ecdf_bound(0.01, 0.05, 0.05) == doctest::Approx(0.01 * 3.995732273554 / 0.05));
    const EcdfCrossing c = ecdf_crossing_check(std::vector<double>{0.3, 0.1, 0.2}, 0.05, 0.05);
    REQUIRE(c.ecdf.size() == 3);
    CHECK(c.ecdf[0].first == 0.1);
    CHECK(c.ecdf[2].second == 1.0);
}

TEST_CASE("FWER rule thresholds the capped aggregate") {
    AggregatedPValues agg;
    agg.values = Eigen::Vector4d(0.01, 0.05, 0.0500001, 1.0);
    const SelectionReport r = fwer_select(agg, 0.05);
    CHECK(r.selected == IndexList{0, 1});
    CHECK(r.rule.control_target(4) == "FWER <= 0.05");
    CHECK_THROWS_AS(fwer_select(agg, 1.5), ValidationError);
}

TEST_CASE("FDR step-up examples") {
    AggregatedPValues agg;
    agg.values.resize(5);
    agg.values << 0.001, 0.15, 0.012, 0.9, 0.04;
    // sorted 0.001 0.012 0.04 0.15 0.9 against 0.05 0.10 0.15 0.20 0.25
    CHECK(fdr_select(agg, 0.05, false).selected == IndexList{0, 1, 2, 4});
    // corrected: rank thresholds 0.0219 0.0438 0.0657 0.0876 0.1095
    const double qc = 0.05 / harmonic_sum(5);
    const SelectionReport corr = fdr_select(agg, 0.05, true);
    CHECK(corr.effective_level == doctest::Approx(qc));
    CHECK(corr.selected == IndexList{0, 2, 4});
    CHECK(harmonic_sum(5) == doctest::Approx(137.0 / 60.0));
    CHECK(corr.rule.name() == "fdr-corrected");
    CHECK(corr.rule.control_target(5) == "FDR <= 0.05");

    // a value above the line is still selected when a later one is below
    agg.values << 0.06, 0.07, 0.5, 0.6, 0.7;
    CHECK(fdr_select(agg, 0.05, false).selected == IndexList{0, 1});
    agg.values << 0.2, 0.3, 0.4, 0.5, 0.6;
    CHECK(fdr_select(agg, 0.05, false).selected.empty());
}

TEST_CASE("step-up equals the largest self-consistent set") {
    Engine e = testing::engine(8);
    std::uniform_int_distribution<int> level(0, 40);
    for (int trial = 0; trial < 300; ++trial) {
        const int p = 1 + static_cast<int>(e() % 10);
        Eigen::VectorXd v(p);
        for (int j = 0; j < p; ++j) v(j) = level(e) / 200.0; // ties are common
        const double q = (1 + static_cast<int>(e() % 20)) / 100.0;
        // largest S with every member at or below |S| q
        IndexList best;
        for (unsigned mask = 0; mask < (1u << p); ++mask) {
            IndexList s;
            for (int j = 0; j < p; ++j)
                if (mask & (1u << j)) s.push_back(j);
            const double cut = static_cast<double>(s.size()) * q;
            if (std::all_of(s.begin(), s.end(), [&](int j) { return v(j) <= cut; }) && s.size() > best.size()) best = s;
        }
        REQUIRE(step_up(v, q) == best);

        AggregatedPValues agg;
        agg.values = v;
        const IndexList unc = fdr_select(agg, 0.1, false).selected;
        const IndexList cor = fdr_select(agg, 0.1, true).selected;
        CHECK(std::includes(unc.begin(), unc.end(), cor.begin(), cor.end()));
    }
}

TEST_CASE("expected-false-positive rule") {
    AggregatedPValues agg;
    agg.values = Eigen::Vector4d(0.5, 1.0, 1.01, kNeverRejected);
    const SelectionReport r = ev_select(agg, 0.05, 20);
    CHECK(r.selected == IndexList{0, 1});
    CHECK(r.rule.control_target(4) == "E[V] <= 1");
    CHECK(r.rule.name() == "ev");
    CHECK_THROWS_AS(ev_select(agg, 0.05, 0.5), ValidationError);
}

TEST_CASE("aggregation is equivariant under column permutation and invariant under row order") {
    Engine e = testing::engine(9);
    const Eigen::MatrixXd m = random_matrix(30, 8, e);
    std::vector<int> perm{3, 0, 7, 1, 6, 2, 5, 4};
    Eigen::MatrixXd permuted(30, 8), reversed = m.colwise().reverse();
    for (int j = 0; j < 8; ++j) permuted.col(j) = m.col(perm[static_cast<std::size_t>(j)]);
    const auto base = aggregate_adaptive(matrix_from(m), 0.05).values;
    const auto pv = aggregate_adaptive(matrix_from(permuted), 0.05).values;
    const auto rv = aggregate_adaptive(matrix_from(reversed), 0.05).values;
    for (int j = 0; j < 8; ++j) CHECK(pv(j) == base(perm[static_cast<std::size_t>(j)]));
    CHECK(rv == base);
}

TEST_CASE("single split is row 0 of the multi-split matrix") {
    const Dataset d = signal_data(60, 30, 3, 0.8, 10);
    MultiSplitOptions opt;
    opt.B = 4;
    opt.screen.kind = ScreenerKind::Fixed;
    const RngSpec rng{11};
    const PValueMatrix m = multi_split_pvalues(d, opt, rng);
    const SelectionReport single = single_split_select(d, opt.screen, 0.05, rng);
    CHECK(single.pvalues == Eigen::VectorXd(m.values.row(0).transpose()));
    CHECK(single.selected == single_split_from_row(m.row(0), 0.05).selected);
}

TEST_CASE("single-split selections depend on the seed") {
    const Dataset d = signal_data(100, 200, 5, 0.35, 12);
    ScreenOptions opt;
    opt.kind = ScreenerKind::Fixed;
    std::set<IndexList> sets;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        sets.insert(single_split_select(d, opt, 0.05, RngSpec{seed}).selected);
    }
    CHECK(sets.size() >= 2);
}

TEST_CASE("parallel matrix equals the serial one") {
    const Dataset d = signal_data(50, 40, 3, 1.0, 13);
    for (ScreenerKind kind : {ScreenerKind::Fixed, ScreenerKind::Adap}) {
        MultiSplitOptions opt;
        opt.B = 12;
        opt.screen.kind = kind;
        const PValueMatrix a = multi_split_pvalues(d, opt, RngSpec{14});
        const PValueMatrix b = multi_split_pvalues_serial(d, opt, RngSpec{14});
        CHECK(a.values == b.values);
        CHECK(a.uncapped == b.uncapped);
        for (int i = 0; i < 12; ++i) {
            CHECK(a.split_meta[static_cast<std::size_t>(i)].screened ==
                  b.split_meta[static_cast<std::size_t>(i)].screened);
        }
    }
}

TEST_CASE("split flags are tallied") {
    PValueMatrix m = matrix_from(Eigen::MatrixXd::Ones(3, 2));
    m.split_meta[0].empty_screen = true;
    m.split_meta[1].truncated = true;
    m.split_meta[2].dropped_for_rank = 2;
    SelectionReport r;
    attach_split_flags(r, m);
    CHECK(r.splits_empty == 1);
    CHECK(r.splits_truncated == 1);
    CHECK(r.splits_rank_repaired == 1);
}

}
