// Shared fixtures and independent oracles for the unit and acceptance tests.
#ifndef PSPC_TESTS_SUPPORT_HPP
#define PSPC_TESTS_SUPPORT_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "pspc/dataset.hpp"
#include "pspc/patch_geometry.hpp"

namespace testing {

using pspc::ImageDataset;
using pspc::ImageShape;
using mp = boost::multiprecision::cpp_bin_float_50;

inline std::shared_ptr<const ImageDataset> make_dataset(ImageShape shape, std::vector<double> values,
                                                        std::string name = "test") {
    return std::make_shared<const ImageDataset>(std::move(name), shape, std::move(values));
}

inline std::shared_ptr<const ImageDataset> pixel_dataset(std::vector<double> values) {
    return make_dataset({1, 1, 1}, std::move(values), "pixels");
}

/// N images with entries uniform in [-scale, scale].
inline std::shared_ptr<const ImageDataset> random_dataset(ImageShape shape, std::size_t n, std::uint64_t seed,
                                                          double scale = 1.0) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<double> values(n * shape.size());
    for (auto& v : values) v = u(gen);
    return make_dataset(shape, std::move(values), "random");
}

/**
 * Every pixel assigns the first n images distinct colors from the
 * 4 x 4 x 4 lattice {-1, -1/3, 1/3, 1}^3 (a fresh permutation per pixel),
 * so any two images differ by at least 2/3 in some channel at every pixel.
 */
inline std::shared_ptr<const ImageDataset> lattice_dataset(std::size_t n, std::size_t side, std::uint64_t seed) {
    const double levels[4] = {-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0};
    ImageShape shape{side, side, 3};
    std::mt19937_64 gen(seed);
    std::vector<double> values(n * shape.size());
    std::vector<int> colors(64);
    for (std::size_t p = 0; p < shape.pixels(); ++p) {
        std::iota(colors.begin(), colors.end(), 0);
        std::shuffle(colors.begin(), colors.end(), gen);
        for (std::size_t i = 0; i < n; ++i) {
            const int c = colors[i];
            double* px = values.data() + i * shape.size() + p * 3;
            px[0] = levels[c / 16];
            px[1] = levels[(c / 4) % 4];
            px[2] = levels[c % 4];
        }
    }
    return make_dataset(shape, std::move(values), "lattice");
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> g;
    std::vector<double> v(n);
    for (auto& x : v) x = scale * g(gen);
    return v;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](double x, double y) {
               return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
           });
}

// Softmax-weighted average in 50-digit arithmetic, straight from the definition.
inline std::vector<mp> mp_posterior_weights(const ImageDataset& ds, std::span<const double> z, double t) {
    const std::size_t n = ds.size();
    std::vector<mp> logw(n);
    const mp tt = mp(t) * mp(t);
    for (std::size_t i = 0; i < n; ++i) {
        mp d = 0;
        const auto x = ds.image(i);
        for (std::size_t j = 0; j < z.size(); ++j) {
            const mp diff = mp(z[j]) - mp(x[j]);
            d += diff * diff;
        }
        logw[i] = -d / (2 * tt);
    }
    const mp peak = *std::max_element(logw.begin(), logw.end());
    mp total = 0;
    for (auto& l : logw) {
        l = boost::multiprecision::exp(l - peak);
        total += l;
    }
    for (auto& l : logw) l /= total;
    return logw;
}

inline std::vector<double> mp_optimal_denoise(const ImageDataset& ds, std::span<const double> z, double t) {
    const auto w = mp_posterior_weights(ds, z, t);
    std::vector<double> out(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) {
        mp acc = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) acc += w[i] * mp(ds.image(i)[j]);
        out[j] = static_cast<double>(acc);
    }
    return out;
}

/**
 * Composite built from explicit 0/1 cropping matrices: per crop the
 * posterior mean of C x under likelihoods on C z, then
 * (sum C^T C)^{-1} sum C^T m_C by a dense solve.
 */
inline Eigen::VectorXd dense_composite(const ImageDataset& ds, const Eigen::VectorXd& z, double t,
                                       const pspc::PatchSet& set) {
    const auto& shape = ds.shape();
    const auto d = static_cast<Eigen::Index>(shape.size());
    const auto C = static_cast<Eigen::Index>(shape.channels);
    Eigen::MatrixXd X(d, static_cast<Eigen::Index>(ds.size()));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto img = ds.image(i);
        X.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(img.data(), d);
    }
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
    for (const auto& crop : set.crops()) {
        const auto n = static_cast<Eigen::Index>(crop.pixels.size()) * C;
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, d);
        for (std::size_t k = 0; k < crop.pixels.size(); ++k) {
            const auto& px = crop.pixels[k];
            for (Eigen::Index c = 0; c < C; ++c) {
                M(static_cast<Eigen::Index>(k) * C + c,
                  static_cast<Eigen::Index>((px.row * shape.width + px.col) * shape.channels) + c) = 1.0;
            }
        }
        const Eigen::VectorXd zc = M * z;
        const Eigen::MatrixXd XC = M * X;
        Eigen::VectorXd logw = -(XC.colwise() - zc).colwise().squaredNorm().transpose() / (2 * t * t);
        logw.array() -= logw.maxCoeff();
        Eigen::VectorXd w = logw.array().exp();
        w /= w.sum();
        A += M.transpose() * M;
        b += M.transpose() * (XC * w);
    }
    return A.partialPivLu().solve(b);
}

/**
 * Greedy crop by repeated argmax over the remaining pixels (first in
 * row-major order wins ties), with masses summed exactly.
 */
inline std::vector<pspc::Pixel> greedy_oracle(std::span<const double> map, std::size_t W, double lambda) {
    using big = boost::multiprecision::cpp_bin_float_100;
    big total = 0;
    for (double v : map) total += big(v);
    std::vector<bool> used(map.size(), false);
    std::vector<pspc::Pixel> picked;
    big captured = 0;
    for (;;) {
        std::size_t best = map.size();
        for (std::size_t i = 0; i < map.size(); ++i) {
            if (used[i] || map[i] <= 0.0) continue;
            if (best == map.size() || map[i] > map[best]) best = i;
        }
        if (best == map.size()) break;
        used[best] = true;
        captured += big(map[best]);
        picked.push_back({static_cast<std::uint32_t>(best / W), static_cast<std::uint32_t>(best % W)});
        if (captured >= big(lambda) * total) break;
    }
    return picked;
}

}  // namespace testing

#endif
