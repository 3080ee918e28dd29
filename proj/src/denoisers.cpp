#include "pspc/denoisers.hpp"

#include <cmath>
#include <filesystem>

#include "pspc/csv.hpp"
#include "pspc/empirical.hpp"
#include "pspc/errors.hpp"

namespace pspc {

namespace fs = std::filesystem;

namespace {

void check_input(const ImageShape& shape, std::span<const double> z) {
    if (z.size() != shape.size()) throw ShapeMismatch("observation does not match the denoiser's image shape");
}

class PosteriorProbe : public JacobianProbe {
public:
    PosteriorProbe(DatasetPtr dataset, std::span<const double> z, double t)
        : dataset_(std::move(dataset)), moments_(*dataset_, z, t) {}

    const Image& output() const override { return moments_.mean(); }
    void column(std::size_t j, std::span<double> out) const override { moments_.jacobian_column(j, out); }
    bool analytic() const override { return true; }

private:
    DatasetPtr dataset_;
    PosteriorMoments moments_;
};

class GaussianProbe : public JacobianProbe {
public:
    GaussianProbe(const GaussianModel& model, std::span<const double> z, double t)
        : model_(model), output_(gaussian_denoise(model, z, t)) {
        const Eigen::ArrayXd lambda = model.eigenvalues.array();
        shrink_ = (lambda / (lambda + t * t)).matrix();
    }

    const Image& output() const override { return output_; }
    void column(std::size_t j, std::span<double> out) const override {
        const auto d = static_cast<Eigen::Index>(out.size());
        if (d != model_.basis.rows() || static_cast<Eigen::Index>(j) >= d) {
            throw ShapeMismatch("jacobian column out of range");
        }
        const Eigen::VectorXd coeff = shrink_.cwiseProduct(model_.basis.row(static_cast<Eigen::Index>(j)).transpose());
        Eigen::Map<Eigen::VectorXd>(out.data(), d) = model_.basis * coeff;
    }
    bool analytic() const override { return true; }

private:
    const GaussianModel& model_;
    Image output_;
    Eigen::VectorXd shrink_;
};

std::string optional_k(std::optional<std::size_t> top_k) {
    return top_k ? ",k=" + std::to_string(*top_k) : "";
}

}  // namespace

OptimalDenoiser::OptimalDenoiser(DatasetPtr dataset, std::optional<std::size_t> top_k)
    : dataset_(std::move(dataset)), top_k_(top_k) {
    if (!dataset_) throw ConfigError("optimal denoiser needs a dataset");
    if (top_k_ && (*top_k_ < 1 || *top_k_ > dataset_->size())) throw ConfigError("top-k must lie in [1, N]");
}

std::string OptimalDenoiser::describe() const {
    return top_k_ ? "optimal(k=" + std::to_string(*top_k_) + ")" : "optimal";
}

Image OptimalDenoiser::denoise(std::span<const double> z, double t) const {
    return optimal_denoise(*dataset_, z, t, top_k_);
}

std::unique_ptr<JacobianProbe> OptimalDenoiser::linearize(std::span<const double> z, double t,
                                                          double fd_step) const {
    if (top_k_) return linearize_numerically(z, t, fd_step);
    check_input(shape(), z);
    return std::make_unique<PosteriorProbe>(dataset_, z, t);
}

GaussianDenoiser::GaussianDenoiser(DatasetPtr dataset) {
    if (!dataset) throw ConfigError("gaussian denoiser needs a dataset");
    shape_ = dataset->shape();
    model_ = fit_gaussian(*dataset);
}

Image GaussianDenoiser::denoise(std::span<const double> z, double t) const {
    check_input(shape_, z);
    return gaussian_denoise(model_, z, t);
}

std::unique_ptr<JacobianProbe> GaussianDenoiser::linearize(std::span<const double> z, double t, double) const {
    detail::require_positive_time(t, "gaussian linearize");
    check_input(shape_, z);
    return std::make_unique<GaussianProbe>(model_, z, t);
}

PatchSetDenoiser::PatchSetDenoiser(DatasetPtr dataset, PatchSet patch_set, std::string label,
                                   std::optional<std::size_t> top_k)
    : dataset_(std::move(dataset)), patch_set_(std::move(patch_set)), label_(std::move(label)), top_k_(top_k) {
    if (!dataset_) throw ConfigError("patch denoiser needs a dataset");
    if (patch_set_.height() != dataset_->shape().height || patch_set_.width() != dataset_->shape().width) {
        throw ShapeMismatch("patch set geometry does not match the dataset");
    }
    patch_set_.require_full_coverage();
}

Image PatchSetDenoiser::denoise(std::span<const double> z, double t) const {
    return pspc_denoise(*dataset_, z, t, patch_set_, top_k_);
}

std::shared_ptr<PatchSetDenoiser> make_patch_denoiser(DatasetPtr dataset, std::size_t side,
                                                      std::optional<std::size_t> top_k) {
    if (!dataset) throw ConfigError("patch denoiser needs a dataset");
    const auto& shape = dataset->shape();
    auto set = square_crop_set(shape.height, shape.width, side);
    return std::make_shared<PatchSetDenoiser>(std::move(dataset), std::move(set),
                                              "patch(s=" + std::to_string(side) + optional_k(top_k) + ")", top_k);
}

SquareDenoiser::SquareDenoiser(DatasetPtr dataset, SizeSchedule schedule, std::optional<std::size_t> top_k)
    : dataset_(std::move(dataset)), schedule_(std::move(schedule)), top_k_(top_k) {
    if (!dataset_) throw ConfigError("pspc-square denoiser needs a dataset");
    const auto& shape = dataset_->shape();
    for (const auto& [t, s] : schedule_.knots()) {
        if (s < 1 || s > std::min(shape.height, shape.width)) throw ConfigError("patch size outside [1, min(H, W)]");
    }
}

std::string SquareDenoiser::describe() const {
    std::string out = "pspc-square(";
    for (std::size_t i = 0; i < schedule_.knots().size(); ++i) {
        if (i) out += ";";
        out += format_number(schedule_.knots()[i].first) + ":" + std::to_string(schedule_.knots()[i].second);
    }
    return out + optional_k(top_k_) + ")";
}

const PatchSet& SquareDenoiser::set_for(std::size_t side) const {
    std::lock_guard lock(mutex_);
    auto it = sets_.find(side);
    if (it == sets_.end()) {
        const auto& shape = dataset_->shape();
        it = sets_.emplace(side, square_crop_set(shape.height, shape.width, side)).first;
    }
    return it->second;
}

Image SquareDenoiser::denoise(std::span<const double> z, double t) const {
    detail::require_positive_time(t, "pspc-square");
    return pspc_denoise(*dataset_, z, t, set_for(schedule_.at(t)), top_k_);
}

FlexDenoiser::FlexDenoiser(DatasetPtr dataset, std::shared_ptr<const HeatmapSource> heatmaps,
                           LambdaSchedule schedule, std::optional<std::size_t> top_k)
    : dataset_(std::move(dataset)), heatmaps_(std::move(heatmaps)), schedule_(std::move(schedule)), top_k_(top_k) {
    if (!dataset_ || !heatmaps_) throw ConfigError("pspc-flex denoiser needs a dataset and heatmaps");
}

std::string FlexDenoiser::describe() const {
    std::string out = "pspc-flex(" + heatmaps_->describe() + ";";
    for (std::size_t i = 0; i < schedule_.knots().size(); ++i) {
        if (i) out += ";";
        out += format_number(schedule_.knots()[i].first) + ":" + format_number(schedule_.knots()[i].second);
    }
    return out + optional_k(top_k_) + ")";
}

Image FlexDenoiser::denoise(std::span<const double> z, double t) const {
    detail::require_positive_time(t, "pspc-flex");
    const auto maps = heatmaps_->maps_for(t);
    return pspc_flex(*dataset_, z, t, maps->values, schedule_, top_k_);
}

ExternalDenoiser::ExternalDenoiser(Tensor outputs, std::vector<double> t_grid, std::string origin)
    : t_grid_(std::move(t_grid)), values_(std::move(outputs.values)), origin_(std::move(origin)) {
    if (outputs.dims.size() != 5) throw ShapeMismatch("external denoiser outputs must be (T, M, H, W, C)");
    if (outputs.dims[0] != t_grid_.size()) {
        throw ShapeMismatch("external denoiser has " + std::to_string(outputs.dims[0]) + " t slices but the grid has " +
                            std::to_string(t_grid_.size()));
    }
    batch_ = outputs.dims[1];
    shape_ = {outputs.dims[2], outputs.dims[3], outputs.dims[4]};
}

Image ExternalDenoiser::denoise(std::span<const double>, double t) const {
    throw MissingData("external denoiser is only defined on its evaluation grid (requested t=" + format_number(t) +
                      ")");
}

Image ExternalDenoiser::denoise_at(std::span<const double> z, double t, std::size_t t_index,
                                   std::size_t sample) const {
    const std::string cell = "(t=" + format_number(t) + ", index=" + std::to_string(sample) + ")";
    check_input(shape_, z);
    if (t_index >= t_grid_.size() || sample >= batch_) throw MissingData("external denoiser has no output at " + cell);
    if (std::abs(t_grid_[t_index] - t) > 1e-12 * std::abs(t)) {
        throw MissingData("external denoiser grid t=" + format_number(t_grid_[t_index]) + " does not match " + cell);
    }
    const std::size_t d = shape_.size();
    const auto first = values_.begin() + static_cast<std::ptrdiff_t>((t_index * batch_ + sample) * d);
    Image out(first, first + static_cast<std::ptrdiff_t>(d));
    for (double v : out) {
        if (std::isnan(v)) throw MissingData("external denoiser output is NaN at " + cell);
    }
    return out;
}

std::shared_ptr<ExternalDenoiser> load_external_denoiser(const fs::path& path,
                                                         std::optional<std::vector<double>> t_grid) {
    Tensor outputs = read_tensor_file(path);
    const fs::path sidecar = path.string() + ".csv";
    if (fs::exists(sidecar)) {
        t_grid = read_csv(sidecar).column("t");
    }
    if (!t_grid) throw MissingData("no t grid for external denoiser " + path.string());
    return std::make_shared<ExternalDenoiser>(std::move(outputs), std::move(*t_grid), path.string());
}

ConstantDenoiser::ConstantDenoiser(ImageShape shape, double value) : shape_(shape), value_(value) {}

Image ConstantDenoiser::denoise(std::span<const double> z, double t) const {
    detail::require_positive_time(t, "constant denoiser");
    check_input(shape_, z);
    return Image(shape_.size(), value_);
}

FunctionDenoiser::FunctionDenoiser(ImageShape shape, std::string name, Fn fn)
    : shape_(shape), name_(std::move(name)), fn_(std::move(fn)) {}

Image FunctionDenoiser::denoise(std::span<const double> z, double t) const {
    check_input(shape_, z);
    Image out = fn_(z, t);
    if (out.size() != shape_.size()) throw ShapeMismatch("function denoiser returned the wrong size");
    return out;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        parts.push_back(s.substr(start, pos - start));
        if (pos == std::string::npos) return parts;
        start = pos + 1;
    }
}

bool looks_numeric(const std::string& s) {
    if (s.empty()) return false;
    char* end = nullptr;
    std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

double parse_double(const std::string& s, const std::string& spec) {
    if (!looks_numeric(s)) throw ConfigError("bad number '" + s + "' in denoiser spec '" + spec + "'");
    return std::strtod(s.c_str(), nullptr);
}

std::size_t parse_size(const std::string& s, const std::string& spec) {
    const double v = parse_double(s, spec);
    if (v < 0 || v != std::floor(v)) throw ConfigError("expected a nonnegative integer in '" + spec + "'");
    return static_cast<std::size_t>(v);
}

}  // namespace

DenoiserPtr make_denoiser(const std::string& spec, const DenoiserContext& context) {
    const auto parts = split(spec, ':');
    const std::string& kind = parts[0];
    auto need_dataset = [&] {
        if (!context.dataset) throw ConfigError("denoiser '" + spec + "' needs a dataset");
        return context.dataset;
    };
    if (kind == "optimal") {
        if (parts.size() > 2) throw ConfigError("usage: optimal[:K]");
        std::optional<std::size_t> k;
        if (parts.size() == 2) k = parse_size(parts[1], spec);
        return std::make_shared<OptimalDenoiser>(need_dataset(), k);
    }
    if (kind == "gaussian") return std::make_shared<GaussianDenoiser>(need_dataset());
    if (kind == "patch") {
        if (parts.size() != 2) throw ConfigError("usage: patch:S");
        return make_patch_denoiser(need_dataset(), parse_size(parts[1], spec));
    }
    if (kind == "pspc-square") {
        if (parts.size() != 2) throw ConfigError("usage: pspc-square:S|schedule.csv");
        auto schedule = looks_numeric(parts[1]) ? SizeSchedule::constant(parse_size(parts[1], spec))
                                                : SizeSchedule::from_table(read_csv(parts[1]));
        return std::make_shared<SquareDenoiser>(need_dataset(), std::move(schedule));
    }
    if (kind == "pspc-flex") {
        if (parts.size() < 2 || parts.size() > 3) throw ConfigError("usage: pspc-flex:L|schedule.csv[:maps.tensor]");
        auto schedule = looks_numeric(parts[1]) ? LambdaSchedule::constant(parse_double(parts[1], spec))
                                                : LambdaSchedule::from_table(read_csv(parts[1]));
        auto dataset = need_dataset();
        std::shared_ptr<const HeatmapSource> maps;
        if (parts.size() == 3) {
            maps = std::make_shared<HeatmapBank>(load_external_maps(parts[2]));
        } else {
            maps = std::make_shared<BlobHeatmaps>(dataset->shape().height, dataset->shape().width, context.blob_width);
        }
        return std::make_shared<FlexDenoiser>(dataset, std::move(maps), std::move(schedule));
    }
    if (kind == "external") {
        if (parts.size() != 2) throw ConfigError("usage: external:outputs.tensor");
        return load_external_denoiser(parts[1], context.t_grid);
    }
    if (kind == "constant") {
        if (parts.size() != 2) throw ConfigError("usage: constant:C");
        return std::make_shared<ConstantDenoiser>(need_dataset()->shape(), parse_double(parts[1], spec));
    }
    throw ConfigError("unknown denoiser kind '" + kind + "'");
}

}  // namespace pspc
