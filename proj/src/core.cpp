#include "msplit/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "msplit/errors.hpp"

namespace msplit {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

Dataset::Dataset(Eigen::VectorXd y, Eigen::MatrixXd x, std::vector<std::string> variable_names)
    : y_(std::move(y)), x_(std::move(x)), names_(std::move(variable_names)) {
    if (x_.rows() != y_.size()) {
        throw ValidationError("design has " + std::to_string(x_.rows()) + " rows but response has "
                              + std::to_string(y_.size()));
    }
    if (y_.size() < 4) {
        throw ValidationError("n < 4: need at least 4 observations, got " + std::to_string(y_.size()));
    }
    if (x_.cols() < 1) {
        throw ValidationError("p < 1: design has no columns");
    }
    for (Index i = 0; i < y_.size(); ++i) {
        if (!std::isfinite(y_[i])) {
            throw ValidationError("non-finite response at row " + std::to_string(i + 1));
        }
    }
    for (Index j = 0; j < x_.cols(); ++j) {
        for (Index i = 0; i < x_.rows(); ++i) {
            if (!std::isfinite(x_(i, j))) {
                throw ValidationError("non-finite design entry at row " + std::to_string(i + 1)
                                      + ", column " + std::to_string(j + 1));
            }
        }
    }
    if (!names_.empty()) {
        if (static_cast<Index>(names_.size()) != x_.cols()) {
            throw ValidationError("expected " + std::to_string(x_.cols()) + " variable names, got "
                                  + std::to_string(names_.size()));
        }
        std::set<std::string> seen;
        for (const auto& name : names_) {
            if (!seen.insert(name).second) {
                throw ValidationError("duplicate variable name '" + name + "'");
            }
        }
    }
}

std::string Dataset::name(int j) const {
    if (!names_.empty()) return names_.at(static_cast<std::size_t>(j));
    return "V" + std::to_string(j + 1);
}

std::vector<std::string> Dataset::names() const {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(p()));
    for (int j = 0; j < p(); ++j) out.push_back(name(j));
    return out;
}

Dataset Dataset::centered() const {
    Eigen::MatrixXd xc = x_.rowwise() - x_.colwise().mean();
    Eigen::VectorXd yc = y_.array() - y_.mean();
    return Dataset(std::move(yc), std::move(xc), names_);
}

Dataset validate_dataset(const Table& raw, const ColumnRef& response_column) {
    const Index rows = raw.values.rows();
    const Index cols = raw.values.cols();
    if (!raw.header.empty() && static_cast<Index>(raw.header.size()) != cols) {
        throw ValidationError("header has " + std::to_string(raw.header.size()) + " fields but table has "
                              + std::to_string(cols) + " columns");
    }
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
            if (!std::isfinite(raw.values(i, j))) {
                throw ValidationError("non-finite entry at row " + std::to_string(i + 1) + ", column "
                                      + std::to_string(j + 1));
            }
        }
    }
    if (rows < 4) {
        throw ValidationError("n < 4: need at least 4 observations, got " + std::to_string(rows));
    }

    Index response = -1;
    if (const auto* name = std::get_if<std::string>(&response_column)) {
        auto it = std::find(raw.header.begin(), raw.header.end(), *name);
        if (it == raw.header.end()) {
            throw ValidationError("response column '" + *name + "' not found in header");
        }
        response = it - raw.header.begin();
    } else {
        const int one_based = std::get<int>(response_column);
        if (one_based < 1 || one_based > cols) {
            throw ValidationError("response column index " + std::to_string(one_based) + " out of range 1.."
                                  + std::to_string(cols));
        }
        response = one_based - 1;
    }
    if (cols < 2) {
        throw ValidationError("p < 1: table has no predictor columns");
    }

    Eigen::VectorXd y = raw.values.col(response);
    Eigen::MatrixXd x(rows, cols - 1);
    std::vector<std::string> names;
    for (Index j = 0, k = 0; j < cols; ++j) {
        if (j == response) continue;
        x.col(k++) = raw.values.col(j);
        if (!raw.header.empty()) names.push_back(raw.header[static_cast<std::size_t>(j)]);
    }
    return Dataset(std::move(y), std::move(x), std::move(names));
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return splitmix64(splitmix64(a) ^ (b * 0xd6e8feb86659fd93ULL + 0x632be59bd9b4e019ULL));
}

Engine RngSpec::engine(Stream stream, std::uint64_t index) const {
    const std::uint64_t s = mix_seed(mix_seed(master_seed, static_cast<std::uint64_t>(stream)), index);
    std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
    return Engine(seq);
}

RngSpec RngSpec::child(std::uint64_t index) const {
    return RngSpec{mix_seed(master_seed ^ 0xa0761d6478bd642fULL, index)};
}

IndexList random_subset(int n, int size, Engine& engine) {
    IndexList all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    // partial Fisher-Yates
    for (int i = 0; i < size; ++i) {
        std::uniform_int_distribution<int> pick(i, n - 1);
        std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(pick(engine))]);
    }
    all.resize(static_cast<std::size_t>(size));
    std::sort(all.begin(), all.end());
    return all;
}

std::vector<SplitPlan> make_splits(int n, int B, const RngSpec& rng) {
    if (n < 4) throw ValidationError("make_splits: n < 4");
    if (B < 1) throw ValidationError("make_splits: B < 1");
    const int n_in = screening_size(n);
    std::vector<SplitPlan> plans;
    plans.reserve(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
        Engine engine = rng.engine(Stream::Splitting, static_cast<std::uint64_t>(b));
        SplitPlan plan;
        plan.split_id = b + 1;
        plan.in_indices = random_subset(n, n_in, engine);
        plan.out_indices.reserve(static_cast<std::size_t>(n - n_in));
        std::size_t k = 0;
        for (int i = 0; i < n; ++i) {
            if (k < plan.in_indices.size() && plan.in_indices[k] == i) {
                ++k;
            } else {
                plan.out_indices.push_back(i);
            }
        }
        plans.push_back(std::move(plan));
    }
    return plans;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const IndexList& rows) {
    return m(rows, Eigen::all);
}

Eigen::VectorXd select_rows(const Eigen::VectorXd& v, const IndexList& rows) {
    return v(rows);
}

Eigen::MatrixXd select_block(const Eigen::MatrixXd& m, const IndexList& rows, const IndexList& cols) {
    return m(rows, cols);
}

} // namespace msplit
