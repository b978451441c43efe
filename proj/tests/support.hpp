#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "geochem/nn/tensor.hpp"
#include "geochem/random.hpp"
#include "geochem/spatial.hpp"

namespace testing {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = fs::temp_directory_path() / ("geochem_test_" + tag + "_" + std::to_string(counter()++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

    std::string write(const std::string& name, const std::string& text) const {
        std::ofstream(path_ / name, std::ios::binary) << text;
        return file(name);
    }

private:
    static int& counter() {
        static int c = 0;
        return c;
    }
    fs::path path_;
};

inline std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

inline Eigen::MatrixXd random_matrix(geochem::Rng& rng, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, sd);
    return m;
}

inline std::vector<geochem::Point> random_points(geochem::Rng& rng, std::size_t n, double extent = 1.0) {
    std::vector<geochem::Point> pts(n);
    for (auto& p : pts) p = {rng.uniform(0.0, extent), rng.uniform(0.0, extent)};
    return pts;
}

// Brute-force kNN, ties by lower index.
inline std::vector<geochem::Neighbor> brute_knn(const std::vector<geochem::Point>& pts, const geochem::Point& q,
                                                std::size_t k, long exclude = -1) {
    // ranked by squared distance, reported as its square root
    std::vector<geochem::Neighbor> all;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (static_cast<long>(i) == exclude) continue;
        const double dx = pts[i].x - q.x, dy = pts[i].y - q.y;
        all.push_back({i, dx * dx + dy * dy});
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
    });
    if (all.size() > k) all.resize(k);
    for (auto& n : all) n.distance = std::sqrt(n.distance);
    return all;
}

// Central finite differences against the reverse pass. `loss` rebuilds the
// scalar graph from the current leaf values each call. Returns the largest
// relative error |a - n| / max(|a|, |n|, floor) over all leaf entries.
inline double gradient_check(std::vector<geochem::nn::Tensor> leaves,
                             const std::function<geochem::nn::Tensor()>& loss, double step = 1e-5,
                             double floor = 1e-6) {
    for (auto& t : leaves) t.zero_grad();
    loss().backward();
    std::vector<std::vector<double>> analytic;
    for (auto& t : leaves) analytic.push_back(t.grad());

    double worst = 0.0;
    for (std::size_t l = 0; l < leaves.size(); ++l) {
        auto& data = leaves[l].data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double keep = data[i];
            data[i] = keep + step;
            const double up = loss().item();
            data[i] = keep - step;
            const double down = loss().item();
            data[i] = keep;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[l][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), floor});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

inline geochem::nn::Tensor random_parameter(geochem::Rng& rng, geochem::nn::Shape shape, double sd = 1.0) {
    std::vector<double> data(geochem::nn::shape_numel(shape));
    for (auto& v : data) v = rng.normal(0.0, sd);
    return geochem::nn::Tensor::parameter(std::move(shape), std::move(data));
}

}  // namespace testing
