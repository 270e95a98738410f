#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace msplit {

using Index = Eigen::Index;
using IndexList = std::vector<int>;

/// Response vector and fixed design for Y = X beta + eps (no intercept).
///
/// Immutable once constructed; the constructor enforces n >= 4, p >= 1,
/// finite entries and, when names are given, p unique names.
class Dataset {
public:
    Dataset(Eigen::VectorXd y, Eigen::MatrixXd x, std::vector<std::string> variable_names = {});

    const Eigen::VectorXd& y() const { return y_; }
    const Eigen::MatrixXd& x() const { return x_; }
    int n() const { return static_cast<int>(y_.size()); }
    int p() const { return static_cast<int>(x_.cols()); }

    bool has_names() const { return !names_.empty(); }
    // Falls back to "V<j+1>" when no names were supplied.
    std::string name(int j) const;
    std::vector<std::string> names() const;

    // Dataset with every column centred and y centred.
    Dataset centered() const;

private:
    Eigen::VectorXd y_;
    Eigen::MatrixXd x_;
    std::vector<std::string> names_;
};

/// Rectangular numeric table as read from a delimited file.
struct Table {
    std::vector<std::string> header; // empty when the file had no header row
    Eigen::MatrixXd values;
};

/// Response column reference: a header name or a 1-based column index.
using ColumnRef = std::variant<std::string, int>;

Dataset validate_dataset(const Table& raw, const ColumnRef& response_column);

/// One random split: screening half and testing half (0-based row indices, sorted).
struct SplitPlan {
    IndexList in_indices;
    IndexList out_indices;
    int split_id = 1; // 1..B
};

inline int screening_size(int n) { return (n - 1) / 2; }

enum class Stream : std::uint64_t {
    Splitting = 1,
    CvFolds = 2,
    SimulationNoise = 3,
    BetaSampling = 4,
    Design = 5,
};

using Engine = std::mt19937_64;

/// Deterministic randomness contract. Every (seed, stream, index) triple maps
/// to its own engine, so results never depend on consumption order.
struct RngSpec {
    std::uint64_t master_seed = 0;

    Engine engine(Stream stream, std::uint64_t index) const;
    // Nested scope, e.g. one simulation replicate.
    RngSpec child(std::uint64_t index) const;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

std::vector<SplitPlan> make_splits(int n, int B, const RngSpec& rng);

/// Uniformly random subset of {0..n-1} of the given size, sorted ascending.
IndexList random_subset(int n, int size, Engine& engine);

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const IndexList& rows);
Eigen::VectorXd select_rows(const Eigen::VectorXd& v, const IndexList& rows);
Eigen::MatrixXd select_block(const Eigen::MatrixXd& m, const IndexList& rows, const IndexList& cols);

} // namespace msplit
