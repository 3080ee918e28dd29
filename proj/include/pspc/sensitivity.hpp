#ifndef PSPC_SENSITIVITY_HPP
#define PSPC_SENSITIVITY_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "pspc/csv.hpp"
#include "pspc/dataset.hpp"
#include "pspc/denoiser.hpp"
#include "pspc/patch_geometry.hpp"

namespace pspc {

enum class MapSource { analytic_empirical, finite_difference, external_file, synthetic_blob };

std::string to_string(MapSource source);

/**
 * Gradient sensitivity heatmaps at one t: for every output pixel (x, y)
 * an H x W map over input pixels, stored (H, W, H, W) row-major.
 */
struct SensitivityMap {
    double t = 0.0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;
    std::size_t samples = 0;
    MapSource source = MapSource::analytic_empirical;

    std::size_t pixels() const { return height * width; }
    std::span<const double> map(std::size_t row, std::size_t col) const {
        return {values.data() + (row * width + col) * pixels(), pixels()};
    }
};

struct SensitivityOptions {
    bool force_finite_difference = false;
    double fd_step = 1e-4;
    /// Upper bound on the Jacobian columns held at once.
    std::size_t memory_budget_bytes = std::size_t{64} << 20;
};

/**
 * Expected channel-summed absolute same-channel gradient
 * G(x, y)[i, j] = E_z sum_c |d D(z, t)_{x,y,c} / d z_{i,j,c}| over
 * forward-process samples. Jacobians are streamed column by column.
 */
SensitivityMap sensitivity_map(const Denoiser& denoiser, const ImageDataset& dataset, double t,
                               std::size_t n_samples, std::uint64_t seed, const SensitivityOptions& options = {});

/// Same expectation over given observations (count x dim) instead of forward samples.
SensitivityMap sensitivity_map_at(const Denoiser& denoiser, std::span<const double> zs, double t,
                                  const SensitivityOptions& options = {});

/// Smallest odd side whose centered, clipped square captures at least fraction p of the map's mass.
std::size_t concentration_side_length(std::span<const double> map, std::size_t height, std::size_t width,
                                      Pixel anchor, double p);

/// Mean side length over all anchors, one entry per fraction.
std::vector<double> aggregate_concentration(const SensitivityMap& smap, std::span<const double> fractions);

/// Columns: t, fraction, mean_side.
Table concentration_table(std::span<const SensitivityMap> maps, std::span<const double> fractions);

/// Unnormalized Gaussian bumps exp(-|p - anchor|^2 / (2 width^2)), one per anchor.
SensitivityMap synthetic_blob_maps(std::size_t height, std::size_t width, double blob_width, double t = 0.0);

/// Blob width as a monotone function of t: scale * t^exponent.
struct BlobWidth {
    double scale = 2.0;
    double exponent = 0.3;

    double operator()(double t) const;
};

/// Heatmaps for a flex patch set at a given t.
class HeatmapSource {
public:
    virtual ~HeatmapSource() = default;
    virtual std::shared_ptr<const SensitivityMap> maps_for(double t) const = 0;
    virtual std::string describe() const = 0;
};

class BlobHeatmaps : public HeatmapSource {
public:
    BlobHeatmaps(std::size_t height, std::size_t width, BlobWidth width_fn = {});
    std::shared_ptr<const SensitivityMap> maps_for(double t) const override;
    std::string describe() const override;

private:
    std::size_t height_;
    std::size_t width_;
    BlobWidth width_fn_;
    mutable std::mutex mutex_;
    mutable std::map<double, std::shared_ptr<const SensitivityMap>> cache_;
};

/// A fixed list of maps; queries use the map whose t is nearest in log t.
class HeatmapBank : public HeatmapSource {
public:
    explicit HeatmapBank(std::vector<SensitivityMap> maps);
    std::shared_ptr<const SensitivityMap> maps_for(double t) const override;
    std::string describe() const override;

private:
    std::vector<std::shared_ptr<const SensitivityMap>> maps_;
};

/**
 * One map is written as (H, W, H, W), several as (T, H, W, H, W). The
 * t values and sample counts go to a sidecar CSV at <path>.csv.
 */
void save_maps(const std::filesystem::path& path, std::span<const SensitivityMap> maps, DType dtype = DType::f64);

/// Maps come back in file order, tagged external_file. Negative entries are rejected.
std::vector<SensitivityMap> load_external_maps(const std::filesystem::path& path);

}  // namespace pspc

#endif
