#ifndef PSPC_DENOISERS_HPP
#define PSPC_DENOISERS_HPP

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "pspc/composite.hpp"
#include "pspc/dataset.hpp"
#include "pspc/denoiser.hpp"
#include "pspc/gaussian.hpp"
#include "pspc/sensitivity.hpp"
#include "pspc/tensor_file.hpp"

namespace pspc {

using DatasetPtr = std::shared_ptr<const ImageDataset>;

class OptimalDenoiser : public Denoiser {
public:
    explicit OptimalDenoiser(DatasetPtr dataset, std::optional<std::size_t> top_k = std::nullopt);

    std::string kind() const override { return "optimal"; }
    std::string describe() const override;
    const ImageShape& shape() const override { return dataset_->shape(); }
    Image denoise(std::span<const double> z, double t) const override;
    /// Closed-form posterior covariance Jacobian (finite differences under top-k truncation).
    std::unique_ptr<JacobianProbe> linearize(std::span<const double> z, double t, double fd_step) const override;

private:
    DatasetPtr dataset_;
    std::optional<std::size_t> top_k_;
};

class GaussianDenoiser : public Denoiser {
public:
    explicit GaussianDenoiser(DatasetPtr dataset);

    std::string kind() const override { return "gaussian"; }
    const ImageShape& shape() const override { return shape_; }
    Image denoise(std::span<const double> z, double t) const override;
    std::unique_ptr<JacobianProbe> linearize(std::span<const double> z, double t, double fd_step) const override;

    const GaussianModel& model() const { return model_; }

private:
    ImageShape shape_;
    GaussianModel model_;
};

/// PSPC over one fixed patch set.
class PatchSetDenoiser : public Denoiser {
public:
    PatchSetDenoiser(DatasetPtr dataset, PatchSet patch_set, std::string label,
                     std::optional<std::size_t> top_k = std::nullopt);

    std::string kind() const override { return "patch"; }
    std::string describe() const override { return label_; }
    const ImageShape& shape() const override { return dataset_->shape(); }
    Image denoise(std::span<const double> z, double t) const override;

private:
    DatasetPtr dataset_;
    PatchSet patch_set_;
    std::string label_;
    std::optional<std::size_t> top_k_;
};

/// PSPC over all s x s crops for a fixed s.
std::shared_ptr<PatchSetDenoiser> make_patch_denoiser(DatasetPtr dataset, std::size_t side,
                                                      std::optional<std::size_t> top_k = std::nullopt);

class SquareDenoiser : public Denoiser {
public:
    SquareDenoiser(DatasetPtr dataset, SizeSchedule schedule, std::optional<std::size_t> top_k = std::nullopt);

    std::string kind() const override { return "pspc-square"; }
    std::string describe() const override;
    const ImageShape& shape() const override { return dataset_->shape(); }
    Image denoise(std::span<const double> z, double t) const override;

private:
    const PatchSet& set_for(std::size_t side) const;

    DatasetPtr dataset_;
    SizeSchedule schedule_;
    std::optional<std::size_t> top_k_;
    mutable std::mutex mutex_;
    mutable std::map<std::size_t, PatchSet> sets_;
};

class FlexDenoiser : public Denoiser {
public:
    FlexDenoiser(DatasetPtr dataset, std::shared_ptr<const HeatmapSource> heatmaps, LambdaSchedule schedule,
                 std::optional<std::size_t> top_k = std::nullopt);

    std::string kind() const override { return "pspc-flex"; }
    std::string describe() const override;
    const ImageShape& shape() const override { return dataset_->shape(); }
    Image denoise(std::span<const double> z, double t) const override;

private:
    DatasetPtr dataset_;
    std::shared_ptr<const HeatmapSource> heatmaps_;
    LambdaSchedule schedule_;
    std::optional<std::size_t> top_k_;
};

/**
 * Precomputed outputs (T, M, H, W, C) aligned to an evaluation grid. Only
 * defined at grid cells; anything else raises MissingData naming the cell.
 */
class ExternalDenoiser : public Denoiser {
public:
    ExternalDenoiser(Tensor outputs, std::vector<double> t_grid, std::string origin = "memory");

    std::string kind() const override { return "external-file"; }
    std::string describe() const override { return "external-file(" + origin_ + ")"; }
    const ImageShape& shape() const override { return shape_; }
    Image denoise(std::span<const double> z, double t) const override;
    Image denoise_at(std::span<const double> z, double t, std::size_t t_index, std::size_t sample) const override;

    std::size_t batch() const { return batch_; }
    const std::vector<double>& t_grid() const { return t_grid_; }

private:
    ImageShape shape_;
    std::size_t batch_;
    std::vector<double> t_grid_;
    std::vector<double> values_;
    std::string origin_;
};

/// Reads outputs from a (T, M, H, W, C) tensor; the t grid comes from <path>.csv when present.
std::shared_ptr<ExternalDenoiser> load_external_denoiser(const std::filesystem::path& path,
                                                         std::optional<std::vector<double>> t_grid = std::nullopt);

class ConstantDenoiser : public Denoiser {
public:
    ConstantDenoiser(ImageShape shape, double value);

    std::string kind() const override { return "constant"; }
    std::string describe() const override { return "constant(" + format_number(value_) + ")"; }
    const ImageShape& shape() const override { return shape_; }
    Image denoise(std::span<const double> z, double t) const override;

private:
    ImageShape shape_;
    double value_;
};

/// Wraps an arbitrary (z, t) -> x_hat callable.
class FunctionDenoiser : public Denoiser {
public:
    using Fn = std::function<Image(std::span<const double>, double)>;
    FunctionDenoiser(ImageShape shape, std::string name, Fn fn);

    std::string kind() const override { return name_; }
    const ImageShape& shape() const override { return shape_; }
    Image denoise(std::span<const double> z, double t) const override;

private:
    ImageShape shape_;
    std::string name_;
    Fn fn_;
};

struct DenoiserContext {
    DatasetPtr dataset;
    BlobWidth blob_width;
    /// Grid for external denoisers without a sidecar.
    std::optional<std::vector<double>> t_grid;
};

/**
 * Builds a handle from a spec string:
 *   optimal[:K]  gaussian  patch:S  pspc-square:S|schedule.csv
 *   pspc-flex:L|schedule.csv[:maps.tensor]  external:outputs.tensor  constant:C
 */
DenoiserPtr make_denoiser(const std::string& spec, const DenoiserContext& context);

}  // namespace pspc

#endif
