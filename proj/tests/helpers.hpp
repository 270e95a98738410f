#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include <Eigen/Dense>

#include "msplit/core.hpp"

namespace testing {

using msplit::Engine;

inline Engine engine(std::uint64_t seed) { return Engine(seed); }

inline Eigen::MatrixXd gaussian_matrix(int rows, int cols, Engine& e) {
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = z(e);
    return m;
}

inline Eigen::VectorXd gaussian_vector(int n, Engine& e) {
    return gaussian_matrix(n, 1, e).col(0);
}

// Column of B split p-values: a mix of exact ones (unscreened), small
// values and uniform noise, the shapes the aggregation sees in practice.
inline std::vector<double> pvalue_column(int B, Engine& e) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double p_one = u(e) * 0.7;
    const double p_small = u(e) * 0.5;
    std::vector<double> col(static_cast<std::size_t>(B));
    for (auto& v : col) {
        const double r = u(e);
        if (r < p_one) {
            v = 1.0;
        } else if (r < p_one + p_small) {
            v = std::max(1e-12, std::pow(u(e), 4.0) * 0.1);
        } else {
            v = std::max(1e-12, u(e));
        }
    }
    return col;
}

inline std::vector<double> sorted(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v;
}

// Scratch directory removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("msplit-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string str() const { return path_.string(); }
    std::string operator/(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

} // namespace testing
