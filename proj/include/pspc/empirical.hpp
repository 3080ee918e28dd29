#ifndef PSPC_EMPIRICAL_HPP
#define PSPC_EMPIRICAL_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pspc/dataset.hpp"
#include "pspc/patch_geometry.hpp"

namespace pspc {

/**
 * Posterior over dataset elements given a noisy observation.
 *
 * indices are the retained candidates in ascending order (all of them
 * unless top-k truncation was requested); log_weights and weights are
 * aligned with indices and normalized over the retained set.
 */
struct PosteriorWeights {
    double t = 0.0;
    std::vector<std::size_t> indices;
    std::vector<double> log_weights;
    std::vector<double> weights;
};

/**
 * Squared distances are accumulated per pixel (channels first), then over
 * pixels in row-major crop order. The full-image and patch paths share this
 * order, so a full-image crop reproduces the global posterior bitwise.
 */
std::vector<double> squared_distances(const ImageDataset& dataset, std::span<const double> z);
std::vector<double> patch_squared_distances(const ImageDataset& dataset, const CropSpec& crop,
                                            std::span<const double> z_patch);

/// Softmax of -d_i / (2 t^2) via log-sum-exp, optionally truncated to the k nearest (ties to lower index).
PosteriorWeights weights_from_distances(std::span<const double> squared, double t,
                                        std::optional<std::size_t> top_k = std::nullopt);

PosteriorWeights posterior_weights(const ImageDataset& dataset, std::span<const double> z, double t,
                                   std::optional<std::size_t> top_k = std::nullopt);

/// Empirical posterior mean, summed in dataset index order.
Image optimal_denoise(const ImageDataset& dataset, std::span<const double> z, double t,
                      std::optional<std::size_t> top_k = std::nullopt);

PosteriorWeights patch_posterior_weights(const ImageDataset& dataset, const CropSpec& crop,
                                         std::span<const double> z_patch, double t,
                                         std::optional<std::size_t> top_k = std::nullopt);

/// Posterior mean of the cropped dataset with the likelihood evaluated on crop members only.
std::vector<double> patch_posterior_mean(const ImageDataset& dataset, const CropSpec& crop,
                                         std::span<const double> z_patch, double t,
                                         std::optional<std::size_t> top_k = std::nullopt);

/// Weighted average of the cropped candidates, in index order. Zero weights are skipped.
void weighted_patch_mean(const ImageDataset& dataset, const CropSpec& crop, const PosteriorWeights& weights,
                         std::span<double> out);

/**
 * Per-image, per-pixel squared differences to one observation z. Summing
 * a crop's members from this table gives exactly patch_squared_distances
 * for gather(crop, z), without re-reading channels for every crop.
 */
class PixelDistanceTable {
public:
    PixelDistanceTable(const ImageDataset& dataset, std::span<const double> z);

    std::vector<double> crop_distances(const CropSpec& crop) const;
    std::span<const double> image_row(std::size_t i) const { return {table_.data() + i * pixels_, pixels_}; }

private:
    std::size_t count_;
    std::size_t pixels_;
    std::size_t width_;
    std::vector<double> table_;
};

/**
 * Posterior mean and the Jacobian of the optimal denoiser,
 * d x_hat / d z = Cov_posterior[x] / t^2, available column by column.
 */
class PosteriorMoments {
public:
    PosteriorMoments(const ImageDataset& dataset, std::span<const double> z, double t);

    const Image& mean() const { return mean_; }
    const PosteriorWeights& weights() const { return weights_; }
    double t() const { return weights_.t; }

    void jacobian_column(std::size_t j, std::span<double> out) const;
    std::vector<double> jacobian_column(std::size_t j) const;
    /// Dense d x d row-major matrix; only for small images.
    std::vector<double> jacobian() const;

private:
    const ImageDataset* dataset_;
    PosteriorWeights weights_;
    Image mean_;
};

PosteriorMoments posterior_moments(const ImageDataset& dataset, std::span<const double> z, double t);

}  // namespace pspc

#endif
