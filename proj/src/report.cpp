#include "msplit/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "msplit/csv.hpp"
#include "msplit/errors.hpp"

namespace msplit {

namespace fs = std::filesystem;

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

Json RunManifest::to_json() const {
    Json j;
    j["command"] = command;
    j["seed"] = seed;
    j["version"] = kVersion;
    j["settings"] = settings;
    j["hash"] = hash();
    return j;
}

std::string RunManifest::hash() const {
    Json j;
    j["command"] = command;
    j["seed"] = seed;
    j["version"] = kVersion;
    j["settings"] = settings;
    return hex64(fnv1a(j.dump()));
}

RunManifest RunManifest::from_json(const Json& j) {
    try {
        RunManifest m;
        m.command = j.at("command").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.settings = j.at("settings");
        if (!m.settings.is_object()) throw ValidationError("manifest: settings must be an object");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("manifest: ") + e.what());
    }
}

void OutputSet::add(const std::string& filename, std::string contents) {
    files_.emplace_back(filename, std::move(contents));
}

void OutputSet::write_all() const {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory '" + dir_ + "': " + ec.message());
    for (const auto& [name, contents] : files_) {
        const fs::path target = fs::path(dir_) / name;
        const fs::path tmp = fs::path(dir_) / (name + ".tmp");
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw IoError("cannot write '" + tmp.string() + "'");
            out << contents;
            if (!out) throw IoError("error writing '" + tmp.string() + "'");
        }
        fs::rename(tmp, target, ec);
        if (ec) throw IoError("cannot move '" + tmp.string() + "' into place: " + ec.message());
    }
}

// --- analyze ---------------------------------------------------------------

const SelectionReport& AnalysisResult::report_for(const SelectionRule& rule) const {
    switch (rule.kind) {
    case SelectionRule::Kind::Fwer: return fwer;
    case SelectionRule::Kind::Fdr: return rule.corrected ? fdr_corrected : fdr;
    case SelectionRule::Kind::Ev: return ev;
    case SelectionRule::Kind::SingleSplit: return single_split;
    default: break;
    }
    throw ValidationError("analyze does not support rule " + rule.name());
}

AnalysisResult analyze_matrix(PValueMatrix matrix, const AnalysisSettings& settings, const SelectionRule& primary) {
    AnalysisResult r;
    r.matrix = std::move(matrix);
    r.adaptive = aggregate_adaptive(r.matrix, settings.gamma_min);
    r.uncapped = aggregate_adaptive_uncapped(r.matrix, settings.gamma_min);
    r.median = aggregate_fixed_gamma(r.matrix, 0.5);
    r.fwer = fwer_select(r.adaptive, settings.alpha);
    r.fdr = fdr_select(r.uncapped, settings.q, false);
    r.fdr_corrected = fdr_select(r.uncapped, settings.q, true);
    r.ev = ev_select(r.uncapped, settings.alpha, settings.K);
    r.single_split = single_split_from_row(r.matrix.row(0), settings.alpha);
    for (SelectionReport* rep : {&r.fwer, &r.fdr, &r.fdr_corrected, &r.ev}) attach_split_flags(*rep, r.matrix);
    r.primary = primary;
    return r;
}

namespace {

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<bool> membership(const IndexList& selected, int p) {
    std::vector<bool> in(static_cast<std::size_t>(p), false);
    for (int j : selected) in[static_cast<std::size_t>(j)] = true;
    return in;
}

Json selected_json(const Dataset& data, const IndexList& selected) {
    Json arr = Json::array();
    for (int j : selected) arr.push_back({{"index", j + 1}, {"name", data.name(j)}});
    return arr;
}

Json flags_json(const SelectionReport& r) {
    return {{"splits_empty_screen", r.splits_empty},
            {"splits_truncated", r.splits_truncated},
            {"splits_rank_repaired", r.splits_rank_repaired},
            {"splits_degenerate_pvalue", r.splits_degenerate_pvalue}};
}

} // namespace

std::string pvalues_csv(const Dataset& data, const AnalysisResult& result, const std::string& manifest_hash) {
    const int p = data.p();
    const auto fwer = membership(result.fwer.selected, p);
    const auto fdr = membership(result.fdr.selected, p);
    const auto fdrc = membership(result.fdr_corrected.selected, p);
    const auto ev = membership(result.ev.selected, p);
    const auto single = membership(result.single_split.selected, p);
    std::ostringstream out;
    out << "# manifest=" << manifest_hash << '\n';
    out << "index,name,pvalue,pvalue_uncapped,pvalue_median,pvalue_single_split,screened_splits,"
           "fwer,fdr,fdr_corrected,ev,single_split\n";
    for (int j = 0; j < p; ++j) {
        int screened = 0;
        for (const SplitMeta& m : result.matrix.split_meta) {
            screened += std::binary_search(m.screened.begin(), m.screened.end(), j) ? 1 : 0;
        }
        const auto sj = static_cast<std::size_t>(j);
        out << j + 1 << ',' << csv_quote(data.name(j)) << ',' << format_double(result.adaptive.values(j)) << ','
            << format_double(result.uncapped.values(j)) << ',' << format_double(result.median.values(j)) << ','
            << format_double(result.single_split.pvalues(j)) << ',' << screened << ',' << fwer[sj] << ','
            << fdr[sj] << ',' << fdrc[sj] << ',' << ev[sj] << ',' << single[sj] << '\n';
    }
    return out.str();
}

Json report_json(const Dataset& data, const AnalysisResult& result, const RunManifest& manifest) {
    const SelectionReport& primary = result.report_for(result.primary);
    Json j;
    j["manifest"] = manifest.to_json();
    j["n"] = data.n();
    j["p"] = data.p();
    j["B"] = result.matrix.B();
    j["rule"] = result.primary.name();
    j["level"] = result.primary.level;
    if (result.primary.kind == SelectionRule::Kind::Ev) j["K"] = result.primary.K;
    j["control_target"] = result.primary.control_target(data.p());
    j["effective_level"] = primary.effective_level;
    j["selected"] = selected_json(data, primary.selected);
    j["selected_count"] = primary.selected.size();
    j["flags"] = flags_json(primary);
    const auto kind = result.primary.kind;
    j["pvalue_kind"] = kind == SelectionRule::Kind::SingleSplit ? "single-split adjusted"
                       : kind == SelectionRule::Kind::Fwer     ? "adaptive"
                                                               : "adaptive uncapped";
    Json pv = Json::array();
    for (int v = 0; v < data.p(); ++v) {
        const double x = primary.pvalues(v);
        // JSON has no infinity; never-screened variables are written as "inf"
        pv.push_back({{"name", data.name(v)}, {"pvalue", std::isfinite(x) ? Json(x) : Json("inf")}});
    }
    j["pvalues"] = pv;
    Json all;
    all["fwer"] = selected_json(data, result.fwer.selected);
    all["fdr"] = selected_json(data, result.fdr.selected);
    all["fdr-corrected"] = selected_json(data, result.fdr_corrected.selected);
    all["ev"] = selected_json(data, result.ev.selected);
    all["single-split"] = selected_json(data, result.single_split.selected);
    j["all_rules"] = all;
    return j;
}

std::string matrix_csv(const Dataset& data, const PValueMatrix& matrix, const std::string& manifest_hash) {
    std::ostringstream out;
    out << "# manifest=" << manifest_hash << '\n';
    out << "split,screened_size";
    for (int j = 0; j < data.p(); ++j) out << ',' << csv_quote(data.name(j));
    out << '\n';
    for (int b = 0; b < matrix.B(); ++b) {
        out << b + 1 << ',' << matrix.split_meta[static_cast<std::size_t>(b)].screened_size;
        for (int j = 0; j < matrix.p(); ++j) out << ',' << format_double(matrix.values(b, j));
        out << '\n';
    }
    return out.str();
}

LoadedMatrix read_matrix_csv(const std::string& path) {
    const Table t = read_table(path);
    if (t.header.size() < 3 || t.header[0] != "split" || t.header[1] != "screened_size") {
        throw ValidationError("'" + path + "' is not a p-value matrix written by analyze");
    }
    LoadedMatrix m;
    m.names.assign(t.header.begin() + 2, t.header.end());
    m.values = t.values.rightCols(t.values.cols() - 2);
    if (m.values.rows() < 1) throw ValidationError("'" + path + "' has no splits");
    if (!m.values.allFinite()) throw ValidationError("'" + path + "' has non-finite p-values");
    return m;
}

// --- ecdf ------------------------------------------------------------------

std::string ecdf_csv(const EcdfCrossing& crossing, const std::string& manifest_hash) {
    std::ostringstream out;
    out << "# manifest=" << manifest_hash << '\n' << "p,ecdf\n";
    for (const auto& [p, f] : crossing.ecdf) out << format_double(p) << ',' << format_double(f) << '\n';
    return out.str();
}

std::string bound_csv(double alpha, double gamma_min, int points, const std::string& manifest_hash) {
    std::ostringstream out;
    out << "# manifest=" << manifest_hash << '\n' << "p,bound\n";
    for (int i = 0; i < points; ++i) {
        const double p = static_cast<double>(i) / (points - 1);
        out << format_double(p) << ',' << format_double(ecdf_bound(p, alpha, gamma_min)) << '\n';
    }
    return out.str();
}

// --- simulate --------------------------------------------------------------

namespace {

PValueMode parse_pvalue_mode(const std::string& s) {
    if (s == "normal") return PValueMode::Normal;
    if (s == "t" || s == "student-t") return PValueMode::StudentT;
    throw ValidationError("unknown pvalue_mode '" + s + "'");
}

std::string grid_label(const Json& varied) {
    std::string out;
    for (const auto& [k, v] : varied.items()) {
        if (!out.empty()) out += ',';
        out += k + "=" + (v.is_string() ? v.get<std::string>() : v.dump());
    }
    return out;
}

} // namespace

void apply_settings(SimulationConfig& c, const Json& settings, const std::string& base_dir) {
    if (!settings.is_object()) throw ValidationError("simulation settings must be a JSON object");
    try {
        for (const auto& [key, v] : settings.items()) {
            if (key == "label") c.label = v.get<std::string>();
            else if (key == "n") c.n = v.get<int>();
            else if (key == "p") c.p = v.get<int>();
            else if (key == "rho") c.rho = v.get<double>();
            else if (key == "s") c.s = v.get<int>();
            else if (key == "beta_mode") c.beta_mode = parse_beta_mode(v.get<std::string>());
            else if (key == "snr") c.snr = v.get<double>();
            else if (key == "reps") c.reps = v.get<int>();
            else if (key == "B") c.B = v.get<int>();
            else if (key == "screener") c.screen.kind = parse_screener(v.get<std::string>());
            else if (key == "folds") c.screen.folds = v.get<int>();
            else if (key == "fixed_target") c.screen.fixed_target = v.get<int>();
            else if (key == "random_size") c.screen.random_size = v.get<int>();
            else if (key == "alpha") c.alpha = v.get<double>();
            else if (key == "q") c.q = v.get<double>();
            else if (key == "gamma_min") c.gamma_min = v.get<double>();
            else if (key == "K") c.K = v.get<double>();
            else if (key == "pvalue_mode") c.pvalue_mode = parse_pvalue_mode(v.get<std::string>());
            else if (key == "null_sigma_sq") c.null_sigma_sq = v.get<double>();
            else if (key == "beta") {
                const auto values = v.get<std::vector<double>>();
                c.fixed_beta = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Index>(values.size()));
            }
            else if (key == "methods") {
                c.methods.clear();
                for (const auto& m : v) c.methods.push_back(parse_method(m.get<std::string>()));
            } else if (key == "design") {
                const auto d = v.get<std::string>();
                if (d == "toeplitz") {
                    c.design_source = DesignSource::Toeplitz;
                    c.design_path.clear();
                    c.external_design.resize(0, 0);
                } else {
                    fs::path path(d);
                    if (path.is_relative()) path = fs::path(base_dir) / path;
                    CsvOptions opts;
                    opts.header = settings.value("design_header", true);
                    c.external_design = read_table(path.string(), opts).values;
                    c.design_source = DesignSource::External;
                    c.design_path = d;
                }
            } else if (key == "design_header") {
                // consumed with "design"
            } else {
                throw ValidationError("unknown simulation setting '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("simulation settings: ") + e.what());
    }
}

ExperimentGrid parse_experiment_grid(const Json& j, const std::string& base_dir) {
    if (!j.is_object()) throw ValidationError("experiment config must be a JSON object");
    ExperimentGrid grid;
    try {
        grid.label = j.value("label", std::string("experiment"));
        grid.seed = j.value("seed", std::uint64_t{1});
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("experiment config: ") + e.what());
    }
    SimulationConfig base;
    if (j.contains("base")) apply_settings(base, j.at("base"), base_dir);

    std::vector<std::pair<std::string, Json>> axes;
    if (j.contains("grid")) {
        const Json& g = j.at("grid");
        if (!g.is_object()) throw ValidationError("experiment config: grid must be an object");
        for (const auto& [k, v] : g.items()) {
            if (!v.is_array() || v.empty()) throw ValidationError("experiment config: grid." + k + " must be a non-empty array");
            axes.emplace_back(k, v);
        }
    }
    for (const auto& [k, v] : j.items()) {
        if (k != "label" && k != "seed" && k != "base" && k != "grid")
            throw ValidationError("experiment config: unknown key '" + k + "'");
    }

    std::vector<std::size_t> idx(axes.size(), 0);
    bool done = false;
    while (!done) {
        GridPoint point;
        point.config = base;
        for (std::size_t a = 0; a < axes.size(); ++a) point.varied[axes[a].first] = axes[a].second[idx[a]];
        apply_settings(point.config, point.varied, base_dir);
        if (!point.varied.contains("label")) {
            const std::string coords = grid_label(point.varied);
            point.config.label = coords.empty() ? grid.label : grid.label + ":" + coords;
        }
        point.config.validate();
        grid.points.push_back(std::move(point));
        // last axis varies fastest
        done = true;
        for (std::size_t a = axes.size(); a-- > 0;) {
            if (++idx[a] < axes[a].second.size()) {
                done = false;
                break;
            }
            idx[a] = 0;
        }
    }
    return grid;
}

Json config_to_json(const SimulationConfig& c) {
    Json j;
    j["label"] = c.label;
    if (c.design_source == DesignSource::External) {
        j["design"] = c.design_path;
        j["n"] = c.external_design.rows();
        j["p"] = c.external_design.cols();
    } else {
        j["design"] = "toeplitz";
        j["n"] = c.n;
        j["p"] = c.p;
        j["rho"] = c.rho;
    }
    j["s"] = c.s;
    j["beta_mode"] = to_string(c.beta_mode);
    j["snr"] = c.snr;
    j["reps"] = c.reps;
    j["B"] = c.B;
    j["screener"] = to_string(c.screen.kind);
    j["folds"] = c.screen.folds;
    if (c.screen.kind == ScreenerKind::Fixed) j["fixed_target"] = c.screen.fixed_target;
    if (c.screen.kind == ScreenerKind::Random) j["random_size"] = c.screen.random_size;
    j["alpha"] = c.alpha;
    j["q"] = c.q;
    j["gamma_min"] = c.gamma_min;
    j["K"] = c.K;
    j["pvalue_mode"] = c.pvalue_mode == PValueMode::Normal ? "normal" : "t";
    if (c.fixed_beta) j["beta"] = std::vector<double>(c.fixed_beta->data(), c.fixed_beta->data() + c.fixed_beta->size());
    j["null_sigma_sq"] = c.null_sigma_sq;
    Json methods = Json::array();
    for (Method m : c.methods) methods.push_back(to_string(m));
    j["methods"] = methods;
    return j;
}

std::string experiment_csv_header() {
    return "config,n,p,rho,s,beta_mode,snr,screener,B,rep,method,ok,tp,fp,fwer,fdp,selected,splits_empty,error\n";
}

std::string experiment_csv_rows(const GridPoint& point, const ExperimentResult& result) {
    const SimulationConfig& c = point.config;
    std::ostringstream out;
    for (const RepRecord& r : result.records) {
        out << csv_quote(c.label) << ',' << (c.design_source == DesignSource::External ? c.external_design.rows() : c.n)
            << ',' << c.effective_p() << ',' << format_double(c.rho) << ',' << c.s << ',' << to_string(c.beta_mode)
            << ',' << format_double(c.snr) << ',' << to_string(c.screen.kind) << ',' << c.B << ',' << r.rep + 1
            << ',' << to_string(r.method) << ',' << (r.ok ? 1 : 0) << ',' << r.metrics.true_positives << ','
            << r.metrics.false_positives << ',' << r.metrics.fwer_indicator << ',' << format_double(r.metrics.fdp)
            << ',' << r.selected_size << ',' << r.splits_empty << ',' << csv_quote(r.error) << '\n';
    }
    return out.str();
}

Json summary_json(const GridPoint& point, const ExperimentResult& result) {
    Json j;
    j["config"] = point.config.label;
    j["varied"] = point.varied;
    j["settings"] = config_to_json(point.config);
    Json methods = Json::array();
    for (const MethodSummary& s : result.summaries) {
        methods.push_back({{"method", to_string(s.method)},
                           {"completed", s.completed},
                           {"failed", s.failed},
                           {"tp_mean", s.tp.mean},
                           {"tp_se", s.tp.se},
                           {"fp_mean", s.fp.mean},
                           {"fp_se", s.fp.se},
                           {"fwer", s.fwer.mean},
                           {"fwer_se", s.fwer.se},
                           {"fdr", s.fdr.mean},
                           {"fdr_se", s.fdr.se}});
    }
    j["methods"] = methods;
    return j;
}

} // namespace msplit
