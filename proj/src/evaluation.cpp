#include "msplit/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "msplit/errors.hpp"
#include "msplit/lasso.hpp"

namespace msplit {

namespace {

struct MethodName {
    Method method;
    const char* name;
};

constexpr MethodName kMethodNames[] = {
    {Method::MultiFwer, "multi-fwer"},
    {Method::MultiFdr, "multi-fdr"},
    {Method::MultiFdrCorrected, "multi-fdr-corrected"},
    {Method::MultiEv, "multi-ev"},
    {Method::MultiMedian, "multi-median"},
    {Method::SingleSplit, "single-split"},
    {Method::AdaptiveLasso, "adaptive-lasso"},
    {Method::ClassicBh, "classic-bh"},
};

// Scope reserved for the adaptive-Lasso comparator's CV folds, away from the
// per-split substreams of the same rng.
constexpr std::uint64_t kComparatorScope = 0xada1a550ULL;

MetricSummary mean_and_se(const std::vector<double>& xs) {
    MetricSummary out;
    if (xs.empty()) return out;
    const double n = static_cast<double>(xs.size());
    out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - out.mean) * (x - out.mean);
        out.se = std::sqrt(ss / (n - 1.0) / n);
    }
    return out;
}

} // namespace

std::string to_string(Method m) {
    for (const auto& e : kMethodNames) {
        if (e.method == m) return e.name;
    }
    return "unknown";
}

Method parse_method(const std::string& name) {
    for (const auto& e : kMethodNames) {
        if (name == e.name) return e.method;
    }
    throw ValidationError("unknown method '" + name + "'");
}

std::string to_string(BetaMode m) { return m == BetaMode::Uniform ? "uniform" : "varying"; }

BetaMode parse_beta_mode(const std::string& name) {
    if (name == "uniform") return BetaMode::Uniform;
    if (name == "varying" || name == "varying_strength" || name == "varying-strength") return BetaMode::VaryingStrength;
    throw ValidationError("unknown beta mode '" + name + "'");
}

bool uses_split_matrix(Method m) {
    return m != Method::AdaptiveLasso && m != Method::ClassicBh;
}

int SimulationConfig::effective_p() const {
    return design_source == DesignSource::External ? static_cast<int>(external_design.cols()) : p;
}

void SimulationConfig::validate() const {
    const int pp = effective_p();
    const int nn = design_source == DesignSource::External ? static_cast<int>(external_design.rows()) : n;
    if (nn < 4) throw ValidationError("simulation: n must be >= 4");
    if (pp < 1) throw ValidationError("simulation: p must be >= 1");
    if (!(rho >= 0.0 && rho < 1.0)) throw ValidationError("simulation: rho must lie in [0, 1)");
    if (s < 0 || s > pp) throw ValidationError("simulation: s must lie in [0, p]");
    if (!(snr > 0.0)) throw ValidationError("simulation: snr must be positive");
    if (reps < 1) throw ValidationError("simulation: reps must be >= 1");
    if (B < 1) throw ValidationError("simulation: B must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("simulation: alpha must lie in (0, 1)");
    if (!(q > 0.0 && q < 1.0)) throw ValidationError("simulation: q must lie in (0, 1)");
    if (!(gamma_min > 0.0 && gamma_min < 1.0)) throw ValidationError("simulation: gamma_min must lie in (0, 1)");
    if (!(K >= 1.0)) throw ValidationError("simulation: K must be >= 1");
    if (!(null_sigma_sq > 0.0)) throw ValidationError("simulation: null_sigma_sq must be positive");
    if (fixed_beta && fixed_beta->size() != pp) throw ValidationError("simulation: fixed beta has wrong length");
    if (methods.empty()) throw ValidationError("simulation: no methods requested");
    if (design_source == DesignSource::External && !external_design.allFinite())
        throw ValidationError("simulation: external design has non-finite entries");
}

Eigen::MatrixXd toeplitz_design(int n, int p, double rho, Engine& engine) {
    if (!(rho >= 0.0 && rho < 1.0)) throw ValidationError("toeplitz_design: rho must lie in [0, 1)");
    std::normal_distribution<double> normal(0.0, 1.0);
    const double innovation = std::sqrt(1.0 - rho * rho);
    Eigen::MatrixXd x(n, p);
    for (int i = 0; i < n; ++i) {
        double prev = normal(engine);
        x(i, 0) = prev;
        for (int j = 1; j < p; ++j) {
            prev = rho * prev + innovation * normal(engine);
            x(i, j) = prev;
        }
    }
    return x;
}

Eigen::VectorXd sample_beta(int p, int s, BetaMode mode, Engine& engine) {
    if (s < 0 || s > p) throw ValidationError("sample_beta: s must lie in [0, p]");
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    IndexList support = random_subset(p, s, engine);
    if (mode == BetaMode::Uniform) {
        for (int j : support) beta(j) = 1.0;
    } else {
        std::vector<double> values(static_cast<std::size_t>(s));
        std::iota(values.begin(), values.end(), 1.0);
        std::shuffle(values.begin(), values.end(), engine);
        for (std::size_t k = 0; k < support.size(); ++k) beta(support[k]) = values[k];
    }
    return beta;
}

double toeplitz_quadratic_form(const Eigen::VectorXd& beta, double rho) {
    IndexList nz;
    for (Index j = 0; j < beta.size(); ++j) {
        if (beta(j) != 0.0) nz.push_back(static_cast<int>(j));
    }
    double total = 0.0;
    for (int a : nz) {
        for (int b : nz) total += beta(a) * beta(b) * std::pow(rho, std::abs(a - b));
    }
    return total;
}

double sigma_for_snr(const Eigen::VectorXd& beta, double rho, double snr) {
    if (!(snr > 0.0)) throw ValidationError("sigma_for_snr: snr must be positive");
    const double signal = toeplitz_quadratic_form(beta, rho);
    if (!(signal > 0.0)) throw NumericalError("sigma_for_snr: zero signal, beta' Sigma beta = 0");
    return signal / snr;
}

SelectionReport classic_bh_select(const Dataset& data, double q, PValueMode mode) {
    if (!(q > 0.0 && q < 1.0)) throw ValidationError("classic_bh_select: q must lie in (0, 1)");
    if (data.p() >= data.n()) {
        throw ValidationError("classic_bh_select: standard method breaks down for p >= n (p = "
                              + std::to_string(data.p()) + ", n = " + std::to_string(data.n()) + ")");
    }
    IndexList all(static_cast<std::size_t>(data.p()));
    std::iota(all.begin(), all.end(), 0);
    const OlsFit fit = ols_fit(data.x(), data.y(), all);
    const CoefficientPValues raw = coefficient_pvalues(fit, mode);
    SelectionReport report;
    report.rule = {SelectionRule::Kind::ClassicBh, q, false, 1.0};
    report.pvalues = raw.values;
    report.effective_level = q;
    report.selected = step_up(raw.values, q / data.p());
    report.splits_degenerate_pvalue = raw.any_degenerate() ? 1 : 0;
    return report;
}

SelectionReport adaptive_lasso_select(const Dataset& data, const RngSpec& rng, int folds) {
    Engine engine = rng.child(kComparatorScope).engine(Stream::CvFolds, 0);
    const AdaptiveLassoResult fit = adaptive_lasso(data.x(), data.y(), folds, engine);
    SelectionReport report;
    report.rule = {SelectionRule::Kind::AdaptiveLasso, 0.0, false, 1.0};
    report.pvalues = Eigen::VectorXd::Ones(data.p());
    for (Index j = 0; j < fit.coefficients.size(); ++j) {
        if (fit.coefficients(j) != 0.0) report.selected.push_back(static_cast<int>(j));
    }
    report.splits_empty = fit.degenerate_initial ? 1 : 0;
    return report;
}

RunMetrics score_selection(const IndexList& selected, const Eigen::VectorXd& beta) {
    RunMetrics m;
    for (int j : selected) {
        if (beta(j) != 0.0) {
            ++m.true_positives;
        } else {
            ++m.false_positives;
        }
    }
    const int r = static_cast<int>(selected.size());
    m.fwer_indicator = m.false_positives > 0 ? 1 : 0;
    m.fdp = static_cast<double>(m.false_positives) / std::max(1, r);
    return m;
}

SimulatedData simulate_rep(const SimulationConfig& config, const RngSpec& rep_rng) {
    Eigen::MatrixXd x;
    if (config.design_source == DesignSource::External) {
        x = config.external_design;
    } else {
        Engine design_engine = rep_rng.engine(Stream::Design, 0);
        x = toeplitz_design(config.n, config.p, config.rho, design_engine);
    }
    const int p = static_cast<int>(x.cols());

    Eigen::VectorXd beta;
    if (config.fixed_beta) {
        beta = *config.fixed_beta;
    } else {
        Engine beta_engine = rep_rng.engine(Stream::BetaSampling, 0);
        beta = sample_beta(p, config.s, config.beta_mode, beta_engine);
    }

    double sigma_sq = config.null_sigma_sq;
    if (beta.cwiseAbs().maxCoeff() > 0.0) {
        if (config.design_source == DesignSource::External) {
            // No population covariance for a fixed design; use the sample variance of the signal.
            const Eigen::VectorXd signal = x * beta;
            const double var = (signal.array() - signal.mean()).square().sum() / static_cast<double>(signal.size());
            if (!(var > 0.0)) throw NumericalError("simulate: zero signal on the external design");
            sigma_sq = var / config.snr;
        } else {
            sigma_sq = sigma_for_snr(beta, config.rho, config.snr);
        }
    }

    Engine noise_engine = rep_rng.engine(Stream::SimulationNoise, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sigma = std::sqrt(sigma_sq);
    Eigen::VectorXd y = x * beta;
    for (Index i = 0; i < y.size(); ++i) y(i) += sigma * normal(noise_engine);
    return {Dataset(std::move(y), std::move(x)), std::move(beta), sigma_sq};
}

std::vector<RepRecord> run_rep(const SimulationConfig& config, int rep, const RngSpec& rng) {
    const RngSpec rep_rng = rng.child(static_cast<std::uint64_t>(rep));
    std::vector<RepRecord> records;
    records.reserve(config.methods.size());
    auto fail_all = [&](const std::string& why) {
        records.clear();
        for (Method m : config.methods) {
            RepRecord r;
            r.rep = rep;
            r.method = m;
            r.ok = false;
            r.error = why;
            records.push_back(r);
        }
        return records;
    };

    std::optional<SimulatedData> sim;
    try {
        sim.emplace(simulate_rep(config, rep_rng));
    } catch (const std::exception& e) {
        return fail_all(std::string("simulate: ") + e.what());
    }

    const bool need_matrix = std::any_of(config.methods.begin(), config.methods.end(), uses_split_matrix);
    std::optional<PValueMatrix> matrix;
    std::string matrix_error;
    if (need_matrix) {
        try {
            matrix.emplace(multi_split_pvalues_serial(sim->data, {config.B, config.screen, config.pvalue_mode}, rep_rng));
        } catch (const std::exception& e) {
            matrix_error = std::string("multi-split: ") + e.what();
        }
    }

    for (Method m : config.methods) {
        RepRecord r;
        r.rep = rep;
        r.method = m;
        try {
            if (uses_split_matrix(m) && !matrix) throw Error(matrix_error);
            SelectionReport report;
            switch (m) {
            case Method::MultiFwer: report = fwer_select(aggregate_adaptive(*matrix, config.gamma_min), config.alpha); break;
            case Method::MultiFdr: report = fdr_select(aggregate_adaptive_uncapped(*matrix, config.gamma_min), config.q, false); break;
            case Method::MultiFdrCorrected:
                report = fdr_select(aggregate_adaptive_uncapped(*matrix, config.gamma_min), config.q, true);
                break;
            case Method::MultiEv:
                report = ev_select(aggregate_adaptive_uncapped(*matrix, config.gamma_min), config.alpha, config.K);
                break;
            case Method::MultiMedian: report = fwer_select(aggregate_fixed_gamma(*matrix, 0.5), config.alpha); break;
            case Method::SingleSplit: report = single_split_from_row(matrix->row(0), config.alpha); break;
            case Method::AdaptiveLasso: report = adaptive_lasso_select(sim->data, rep_rng, config.screen.folds); break;
            case Method::ClassicBh: report = classic_bh_select(sim->data, config.q, config.pvalue_mode); break;
            }
            if (uses_split_matrix(m) && m != Method::SingleSplit) attach_split_flags(report, *matrix);
            r.metrics = score_selection(report.selected, sim->beta);
            r.selected_size = static_cast<int>(report.selected.size());
            r.splits_empty = report.splits_empty;
        } catch (const std::exception& e) {
            r.ok = false;
            r.error = e.what();
        }
        records.push_back(r);
    }
    return records;
}

std::vector<MethodSummary> summarize(const SimulationConfig& config, const std::vector<RepRecord>& records) {
    std::vector<MethodSummary> out;
    for (Method m : config.methods) {
        MethodSummary s;
        s.method = m;
        std::vector<double> tp, fp, fwer, fdp;
        for (const RepRecord& r : records) {
            if (r.method != m) continue;
            if (!r.ok) {
                ++s.failed;
                continue;
            }
            ++s.completed;
            tp.push_back(r.metrics.true_positives);
            fp.push_back(r.metrics.false_positives);
            fwer.push_back(r.metrics.fwer_indicator);
            fdp.push_back(r.metrics.fdp);
        }
        s.tp = mean_and_se(tp);
        s.fp = mean_and_se(fp);
        s.fwer = mean_and_se(fwer);
        s.fdr = mean_and_se(fdp);
        out.push_back(s);
    }
    return out;
}

const MethodSummary& ExperimentResult::summary(Method m) const {
    for (const auto& s : summaries) {
        if (s.method == m) return s;
    }
    throw ValidationError("experiment did not run method " + to_string(m));
}

namespace {

ExperimentResult finish(const SimulationConfig& config, std::vector<std::vector<RepRecord>>& per_rep) {
    ExperimentResult result;
    result.config = config;
    for (auto& rows : per_rep) {
        for (auto& r : rows) result.records.push_back(std::move(r));
    }
    result.summaries = summarize(config, result.records);
    return result;
}

} // namespace

ExperimentResult run_experiment_serial(const SimulationConfig& config, const RngSpec& rng) {
    config.validate();
    std::vector<std::vector<RepRecord>> per_rep(static_cast<std::size_t>(config.reps));
    for (int r = 0; r < config.reps; ++r) per_rep[static_cast<std::size_t>(r)] = run_rep(config, r, rng);
    return finish(config, per_rep);
}

ExperimentResult run_experiment(const SimulationConfig& config, const RngSpec& rng) {
    config.validate();
    std::vector<std::vector<RepRecord>> per_rep(static_cast<std::size_t>(config.reps));
#pragma omp parallel for schedule(dynamic)
    for (int r = 0; r < config.reps; ++r) per_rep[static_cast<std::size_t>(r)] = run_rep(config, r, rng);
    return finish(config, per_rep);
}

} // namespace msplit
