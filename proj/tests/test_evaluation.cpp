#include <doctest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "msplit/errors.hpp"
#include "msplit/evaluation.hpp"

using namespace msplit;

TEST_SUITE("evaluation") {

TEST_CASE("Toeplitz design has unit variances and geometric correlations") {
    Engine e = testing::engine(1);
    const int n = 20000;
    const double rho = 0.5;
    const Eigen::MatrixXd x = toeplitz_design(n, 6, rho, e);
    const Eigen::MatrixXd cov = x.transpose() * x / n;
    for (int a = 0; a < 6; ++a) {
        for (int b = a; b < 6; ++b) {
            const double target = std::pow(rho, b - a);
            // sd of a sample second moment is sqrt((1 + target^2) / n)
            const double se = std::sqrt((1 + target * target) / n);
            CHECK(std::abs(cov(a, b) - target) < 3 * se + 1e-12);
        }
    }
    CHECK_THROWS_AS(toeplitz_design(5, 5, 1.0, e), ValidationError);
}

TEST_CASE("Toeplitz design with rho = 0 is white noise") {
    Engine e = testing::engine(2);
    const Eigen::MatrixXd x = toeplitz_design(20000, 3, 0.0, e);
    const Eigen::MatrixXd cov = x.transpose() * x / 20000.0;
    CHECK(std::abs(cov(0, 1)) < 3 / std::sqrt(20000.0));
}

TEST_CASE("sampled coefficients") {
    Engine e = testing::engine(3);
    const Eigen::VectorXd u = sample_beta(50, 5, BetaMode::Uniform, e);
    CHECK((u.array() != 0).count() == 5);
    CHECK(u.sum() == 5.0);
    const Eigen::VectorXd v = sample_beta(50, 5, BetaMode::VaryingStrength, e);
    std::vector<double> nz;
    for (int j = 0; j < 50; ++j)
        if (v(j) != 0) nz.push_back(v(j));
    std::sort(nz.begin(), nz.end());
    CHECK(nz == std::vector<double>{1, 2, 3, 4, 5});
    CHECK(sample_beta(10, 0, BetaMode::Uniform, e).isZero(0.0));
    CHECK_THROWS_AS(sample_beta(3, 4, BetaMode::Uniform, e), ValidationError);
}

TEST_CASE("noise variance from the signal-to-noise ratio") {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(10);
    beta(0) = 1;
    CHECK(sigma_for_snr(beta, 0.5, 4) == doctest::Approx(0.25));
    beta(1) = 1;
    // 1 + 1 + 2 * 0.5
    CHECK(toeplitz_quadratic_form(beta, 0.5) == doctest::Approx(3.0));
    beta(1) = 0;
    beta(3) = 2;
    // 1 + 4 + 2 * 2 * 0.125
    CHECK(toeplitz_quadratic_form(beta, 0.5) == doctest::Approx(5.5));
    // SNR maps to population R^2 = snr / (1 + snr)
    const double s2 = sigma_for_snr(beta, 0.5, 16);
    CHECK(5.5 / (5.5 + s2) == doctest::Approx(16.0 / 17.0));
    CHECK_THROWS_AS(sigma_for_snr(Eigen::VectorXd::Zero(4), 0.5, 4), NumericalError);

    // Monte-Carlo round trip: empirical var(X beta) / sigma^2 within 5%
    Engine e = testing::engine(4);
    const Eigen::MatrixXd x = toeplitz_design(50000, 10, 0.5, e);
    const Eigen::VectorXd signal = x * beta;
    const double var = (signal.array() - signal.mean()).square().mean();
    CHECK(std::abs(var / sigma_for_snr(beta, 0.5, 4) / 4 - 1) < 0.05);
}

TEST_CASE("classic BH uses full-data OLS and the step-up at q / p") {
    Engine e = testing::engine(5);
    const Eigen::MatrixXd x = testing::gaussian_matrix(80, 10, e);
    Eigen::VectorXd y = testing::gaussian_vector(80, e);
    y += 0.8 * x.col(0) + 0.6 * x.col(4);
    const Dataset d(y, x);
    const SelectionReport r = classic_bh_select(d, 0.1);

    const Eigen::MatrixXd inv = (x.transpose() * x).inverse();
    const Eigen::VectorXd b = inv * x.transpose() * y;
    const double s2 = (y - x * b).squaredNorm() / 70.0;
    Eigen::VectorXd raw(10);
    for (int j = 0; j < 10; ++j) raw(j) = std::erfc(std::abs(b(j)) / std::sqrt(s2 * inv(j, j)) / std::sqrt(2.0));
    for (int j = 0; j < 10; ++j) CHECK(r.pvalues(j) == doctest::Approx(raw(j)).epsilon(1e-9));

    std::vector<int> order(10);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int c) { return raw(a) < raw(c); });
    int h = 0;
    for (int i = 1; i <= 10; ++i)
        if (raw(order[static_cast<std::size_t>(i - 1)]) <= i * 0.1 / 10) h = i;
    IndexList expected(order.begin(), order.begin() + h);
    std::sort(expected.begin(), expected.end());
    CHECK(r.selected == expected);
    CHECK(r.rule.name() == "classic-bh");

    const Dataset wide(testing::gaussian_vector(10, e), testing::gaussian_matrix(10, 10, e));
    CHECK_THROWS_WITH_AS(classic_bh_select(wide, 0.1), doctest::Contains("p >= n"), ValidationError);
}

TEST_CASE("classic BH keeps the false discovery rate near its level") {
    // 20 variables, 15 null; independent columns so the level bound is exact in expectation
    const int reps = 2000;
    double fdp_sum = 0;
    for (int rep = 0; rep < reps; ++rep) {
        Engine e = testing::engine(10000 + static_cast<std::uint64_t>(rep));
        const Eigen::MatrixXd x = testing::gaussian_matrix(100, 20, e);
        Eigen::VectorXd beta = Eigen::VectorXd::Zero(20);
        beta.head(5).setConstant(0.3);
        const Dataset d(x * beta + testing::gaussian_vector(100, e), x);
        fdp_sum += score_selection(classic_bh_select(d, 0.1).selected, beta).fdp;
    }
    const double fdr = fdp_sum / reps;
    // expected value is 0.1 * 15 / 20 = 0.075
    CHECK(fdr <= 0.1);
    CHECK(fdr > 0.03);
}

TEST_CASE("selection scoring") {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(6);
    beta(1) = beta(4) = 1;
    const RunMetrics m = score_selection({0, 1, 4, 5}, beta);
    CHECK(m.true_positives == 2);
    CHECK(m.false_positives == 2);
    CHECK(m.fwer_indicator == 1);
    CHECK(m.fdp == 0.5);
    const RunMetrics none = score_selection({}, beta);
    CHECK(none.fdp == 0.0);
    CHECK(none.fwer_indicator == 0);

    // invariants over random selections
    Engine e = testing::engine(6);
    for (int t = 0; t < 200; ++t) {
        const IndexList sel = random_subset(6, static_cast<int>(e() % 7), e);
        const RunMetrics r = score_selection(sel, beta);
        CHECK(r.true_positives + r.false_positives == static_cast<int>(sel.size()));
        CHECK(r.true_positives <= 2);
        CHECK(r.fdp >= 0.0);
        CHECK(r.fdp <= 1.0);
        CHECK(r.fwer_indicator == (r.false_positives > 0));
    }
}

TEST_CASE("simulated replicate") {
    SimulationConfig c;
    c.n = 50;
    c.p = 30;
    c.s = 3;
    c.snr = 4;
    const SimulatedData a = simulate_rep(c, RngSpec{7}.child(0));
    const SimulatedData b = simulate_rep(c, RngSpec{7}.child(0));
    CHECK(a.data.y() == b.data.y());
    CHECK((a.beta.array() != 0).count() == 3);
    CHECK(a.sigma_sq == doctest::Approx(sigma_for_snr(a.beta, 0.5, 4)));

    c.s = 0;
    CHECK(simulate_rep(c, RngSpec{7}.child(0)).sigma_sq == 1.0);

    // external design: fixed across reps, sample-variance noise level
    c.s = 2;
    c.design_source = DesignSource::External;
    Engine e = testing::engine(8);
    c.external_design = testing::gaussian_matrix(40, 12, e);
    const SimulatedData ext = simulate_rep(c, RngSpec{9}.child(3));
    CHECK(ext.data.x() == c.external_design);
    const Eigen::VectorXd signal = c.external_design * ext.beta;
    CHECK(ext.sigma_sq == doctest::Approx((signal.array() - signal.mean()).square().mean() / 4));
}

TEST_CASE("config validation") {
    SimulationConfig c;
    CHECK_NOTHROW(c.validate());
    c.s = 101;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c.s = 5;
    c.rho = -0.1;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c.rho = 0.5;
    c.methods.clear();
    CHECK_THROWS_AS(c.validate(), ValidationError);
    for (Method m : {Method::MultiFwer, Method::MultiFdr, Method::MultiFdrCorrected, Method::MultiEv,
                     Method::MultiMedian, Method::SingleSplit, Method::AdaptiveLasso, Method::ClassicBh}) {
        CHECK(parse_method(to_string(m)) == m);
    }
    CHECK_THROWS_AS(parse_method("lasso"), ValidationError);
    CHECK(parse_beta_mode("varying") == BetaMode::VaryingStrength);
}

TEST_CASE("adaptive Lasso comparator is deterministic") {
    SimulationConfig c;
    c.n = 60;
    c.p = 40;
    const SimulatedData sim = simulate_rep(c, RngSpec{10});
    CHECK(adaptive_lasso_select(sim.data, RngSpec{3}).selected == adaptive_lasso_select(sim.data, RngSpec{3}).selected);
}

TEST_CASE("experiments are reproducible and parallel equals serial") {
    SimulationConfig c;
    c.n = 40;
    c.p = 30;
    c.s = 3;
    c.reps = 6;
    c.B = 5;
    c.screen.kind = ScreenerKind::Fixed;
    c.methods = {Method::MultiFwer, Method::MultiFdr, Method::MultiEv, Method::SingleSplit, Method::ClassicBh};
    const ExperimentResult a = run_experiment(c, RngSpec{11});
    const ExperimentResult b = run_experiment_serial(c, RngSpec{11});
    REQUIRE(a.records.size() == 30);
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].rep == b.records[i].rep);
        CHECK(a.records[i].method == b.records[i].method);
        CHECK(a.records[i].selected_size == b.records[i].selected_size);
        CHECK(a.records[i].metrics.fdp == b.records[i].metrics.fdp);
    }
    CHECK(a.records[0].method == Method::MultiFwer);
    CHECK(a.records[5].rep == 1);

    // classic BH cannot run at p = n; each rep records the failure
    c.p = 40;
    const ExperimentResult wide = run_experiment(c, RngSpec{11});
    const MethodSummary& bh = wide.summary(Method::ClassicBh);
    CHECK(bh.failed == 6);
    CHECK(bh.completed == 0);
    CHECK(wide.summary(Method::MultiFwer).completed == 6);
    for (const RepRecord& r : wide.records) {
        if (r.method == Method::ClassicBh) CHECK(r.error.find("p >= n") != std::string::npos);
    }
    CHECK_THROWS_AS(wide.summary(Method::AdaptiveLasso), ValidationError);
}

TEST_CASE("summaries report the mean and the standard error") {
    SimulationConfig c;
    c.methods = {Method::MultiFwer};
    std::vector<RepRecord> recs(4);
    const int tp[] = {1, 2, 3, 6};
    for (int i = 0; i < 4; ++i) {
        recs[static_cast<std::size_t>(i)].rep = i;
        recs[static_cast<std::size_t>(i)].metrics.true_positives = tp[i];
    }
    recs[3].ok = false;
    const auto s = summarize(c, recs);
    CHECK(s[0].completed == 3);
    CHECK(s[0].failed == 1);
    CHECK(s[0].tp.mean == doctest::Approx(2.0));
    CHECK(s[0].tp.se == doctest::Approx(std::sqrt(1.0 / 3.0)));
}

}
