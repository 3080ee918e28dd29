#include "pspc/empirical.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pspc/errors.hpp"

namespace pspc {

namespace {

void check_top_k(std::optional<std::size_t> top_k, std::size_t n) {
    if (top_k && (*top_k < 1 || *top_k > n)) {
        throw ConfigError("top_k must lie in [1, " + std::to_string(n) + "], got " + std::to_string(*top_k));
    }
}

}  // namespace

std::vector<double> squared_distances(const ImageDataset& dataset, std::span<const double> z) {
    if (z.size() != dataset.dim()) {
        throw ShapeMismatch("observation has " + std::to_string(z.size()) + " values, dataset images have " +
                            std::to_string(dataset.dim()));
    }
    const std::size_t channels = dataset.shape().channels;
    const std::size_t pixels = dataset.shape().pixels();
    std::vector<double> out(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const double* x = dataset.image(i).data();
        double total = 0.0;
        for (std::size_t p = 0; p < pixels; ++p) {
            double pixel = 0.0;
            for (std::size_t c = 0; c < channels; ++c) {
                const double diff = z[p * channels + c] - x[p * channels + c];
                pixel += diff * diff;
            }
            total += pixel;
        }
        out[i] = total;
    }
    return out;
}

std::vector<double> patch_squared_distances(const ImageDataset& dataset, const CropSpec& crop,
                                            std::span<const double> z_patch) {
    const auto& shape = dataset.shape();
    const std::size_t channels = shape.channels;
    if (crop.pixels.empty()) {
        throw ConfigError("patch posterior needs a nonempty crop");
    }
    if (z_patch.size() != crop.flat_size(channels)) {
        throw ShapeMismatch("patch has " + std::to_string(z_patch.size()) + " values, crop needs " +
                            std::to_string(crop.flat_size(channels)));
    }
    for (const auto& p : crop.pixels) {
        if (p.row >= shape.height || p.col >= shape.width) throw ShapeMismatch("crop pixel out of bounds");
    }
    std::vector<double> out(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const double* x = dataset.image(i).data();
        double total = 0.0;
        std::size_t k = 0;
        for (const auto& p : crop.pixels) {
            const double* xp = x + shape.index(p.row, p.col);
            double pixel = 0.0;
            for (std::size_t c = 0; c < channels; ++c, ++k) {
                const double diff = z_patch[k] - xp[c];
                pixel += diff * diff;
            }
            total += pixel;
        }
        out[i] = total;
    }
    return out;
}

PosteriorWeights weights_from_distances(std::span<const double> squared, double t,
                                        std::optional<std::size_t> top_k) {
    detail::require_positive_time(t, "posterior weights");
    check_top_k(top_k, squared.size());
    PosteriorWeights w;
    w.t = t;
    w.indices.resize(squared.size());
    std::iota(w.indices.begin(), w.indices.end(), std::size_t{0});
    if (top_k && *top_k < squared.size()) {
        auto closer = [&](std::size_t a, std::size_t b) {
            return squared[a] < squared[b] || (squared[a] == squared[b] && a < b);
        };
        std::nth_element(w.indices.begin(), w.indices.begin() + static_cast<std::ptrdiff_t>(*top_k - 1),
                         w.indices.end(), closer);
        w.indices.resize(*top_k);
        std::sort(w.indices.begin(), w.indices.end());
    }

    const double scale = 1.0 / (2.0 * t * t);
    w.log_weights.resize(w.indices.size());
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < w.indices.size(); ++k) {
        w.log_weights[k] = -squared[w.indices[k]] * scale;
        peak = std::max(peak, w.log_weights[k]);
    }
    if (!std::isfinite(peak)) {
        throw RangeError("posterior logits are not finite");
    }
    w.weights.resize(w.indices.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < w.indices.size(); ++k) {
        w.weights[k] = std::exp(w.log_weights[k] - peak);
        sum += w.weights[k];
    }
    const double log_norm = peak + std::log(sum);
    for (std::size_t k = 0; k < w.indices.size(); ++k) {
        w.weights[k] /= sum;
        w.log_weights[k] -= log_norm;
    }
    return w;
}

PosteriorWeights posterior_weights(const ImageDataset& dataset, std::span<const double> z, double t,
                                   std::optional<std::size_t> top_k) {
    detail::require_positive_time(t, "posterior_weights");
    return weights_from_distances(squared_distances(dataset, z), t, top_k);
}

namespace {

// Index of the largest weight; the first one wins ties.
std::size_t heaviest(const PosteriorWeights& w) {
    return static_cast<std::size_t>(std::max_element(w.weights.begin(), w.weights.end()) - w.weights.begin());
}

// Mean written as x_a + sum_k w_k (x_k - x_a) around the heaviest image, so a
// dataset of identical images is reproduced exactly.
void anchored_mean(const ImageDataset& dataset, const PosteriorWeights& w, std::span<double> out) {
    const std::size_t anchor = heaviest(w);
    const double* base = dataset.image(w.indices[anchor]).data();
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t k = 0; k < w.indices.size(); ++k) {
        const double wk = w.weights[k];
        if (wk == 0.0 || k == anchor) continue;
        const double* x = dataset.image(w.indices[k]).data();
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += wk * (x[j] - base[j]);
    }
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += base[j];
}

}  // namespace

Image optimal_denoise(const ImageDataset& dataset, std::span<const double> z, double t,
                      std::optional<std::size_t> top_k) {
    const auto w = posterior_weights(dataset, z, t, top_k);
    Image out(dataset.dim());
    anchored_mean(dataset, w, out);
    return out;
}

PosteriorWeights patch_posterior_weights(const ImageDataset& dataset, const CropSpec& crop,
                                         std::span<const double> z_patch, double t,
                                         std::optional<std::size_t> top_k) {
    detail::require_positive_time(t, "patch_posterior_weights");
    return weights_from_distances(patch_squared_distances(dataset, crop, z_patch), t, top_k);
}

void weighted_patch_mean(const ImageDataset& dataset, const CropSpec& crop, const PosteriorWeights& weights,
                         std::span<double> out) {
    const auto& shape = dataset.shape();
    const std::size_t channels = shape.channels;
    if (out.size() != crop.flat_size(channels)) throw ShapeMismatch("patch mean output size mismatch");
    const std::size_t anchor = heaviest(weights);
    const double* base = dataset.image(weights.indices[anchor]).data();
    std::fill(out.begin(), out.end(), 0.0);
    std::size_t m = 0;
    for (std::size_t k = 0; k < weights.indices.size(); ++k) {
        const double wk = weights.weights[k];
        if (wk == 0.0 || k == anchor) continue;
        const double* x = dataset.image(weights.indices[k]).data();
        m = 0;
        for (const auto& p : crop.pixels) {
            const std::size_t off = shape.index(p.row, p.col);
            for (std::size_t c = 0; c < channels; ++c, ++m) out[m] += wk * (x[off + c] - base[off + c]);
        }
    }
    m = 0;
    for (const auto& p : crop.pixels) {
        const double* bp = base + shape.index(p.row, p.col);
        for (std::size_t c = 0; c < channels; ++c, ++m) out[m] += bp[c];
    }
}

std::vector<double> patch_posterior_mean(const ImageDataset& dataset, const CropSpec& crop,
                                         std::span<const double> z_patch, double t,
                                         std::optional<std::size_t> top_k) {
    const auto w = patch_posterior_weights(dataset, crop, z_patch, t, top_k);
    std::vector<double> out(crop.flat_size(dataset.shape().channels));
    weighted_patch_mean(dataset, crop, w, out);
    return out;
}

PixelDistanceTable::PixelDistanceTable(const ImageDataset& dataset, std::span<const double> z)
    : count_(dataset.size()), pixels_(dataset.shape().pixels()), width_(dataset.shape().width) {
    if (z.size() != dataset.dim()) {
        throw ShapeMismatch("observation does not match the dataset image shape");
    }
    const std::size_t channels = dataset.shape().channels;
    table_.resize(count_ * pixels_);
    for (std::size_t i = 0; i < count_; ++i) {
        const double* x = dataset.image(i).data();
        double* row = table_.data() + i * pixels_;
        for (std::size_t p = 0; p < pixels_; ++p) {
            double pixel = 0.0;
            for (std::size_t c = 0; c < channels; ++c) {
                const double diff = z[p * channels + c] - x[p * channels + c];
                pixel += diff * diff;
            }
            row[p] = pixel;
        }
    }
}

std::vector<double> PixelDistanceTable::crop_distances(const CropSpec& crop) const {
    if (crop.pixels.empty()) throw ConfigError("patch posterior needs a nonempty crop");
    std::vector<double> out(count_);
    for (std::size_t i = 0; i < count_; ++i) {
        const double* row = table_.data() + i * pixels_;
        double total = 0.0;
        for (const auto& p : crop.pixels) total += row[p.row * width_ + p.col];
        out[i] = total;
    }
    return out;
}

PosteriorMoments::PosteriorMoments(const ImageDataset& dataset, std::span<const double> z, double t)
    : dataset_(&dataset), weights_(posterior_weights(dataset, z, t)), mean_(dataset.dim()) {
    anchored_mean(dataset, weights_, mean_);
}

void PosteriorMoments::jacobian_column(std::size_t j, std::span<double> out) const {
    const std::size_t d = mean_.size();
    if (j >= d || out.size() != d) throw ShapeMismatch("jacobian column index or size mismatch");
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t k = 0; k < weights_.indices.size(); ++k) {
        const double wk = weights_.weights[k];
        if (wk == 0.0) continue;
        const double* x = dataset_->image(weights_.indices[k]).data();
        const double dj = x[j] - mean_[j];
        // w * (a * b) keeps J[i][j] and J[j][i] bitwise equal
        for (std::size_t i = 0; i < d; ++i) out[i] += wk * ((x[i] - mean_[i]) * dj);
    }
    const double inv_t2 = 1.0 / (weights_.t * weights_.t);
    for (auto& v : out) v *= inv_t2;
}

std::vector<double> PosteriorMoments::jacobian_column(std::size_t j) const {
    std::vector<double> out(mean_.size());
    jacobian_column(j, out);
    return out;
}

std::vector<double> PosteriorMoments::jacobian() const {
    const std::size_t d = mean_.size();
    std::vector<double> dense(d * d);
    std::vector<double> column(d);
    for (std::size_t j = 0; j < d; ++j) {
        jacobian_column(j, column);
        for (std::size_t i = 0; i < d; ++i) dense[i * d + j] = column[i];
    }
    return dense;
}

PosteriorMoments posterior_moments(const ImageDataset& dataset, std::span<const double> z, double t) {
    return PosteriorMoments(dataset, z, t);
}

}  // namespace pspc
