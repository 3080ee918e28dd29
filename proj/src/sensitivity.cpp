#include "pspc/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pspc/diffusion.hpp"
#include "pspc/errors.hpp"
#include "pspc/parallel.hpp"

namespace pspc {

namespace fs = std::filesystem;

std::string to_string(MapSource source) {
    switch (source) {
        case MapSource::analytic_empirical: return "analytic-empirical";
        case MapSource::finite_difference: return "finite-difference";
        case MapSource::external_file: return "external-file";
        case MapSource::synthetic_blob: return "synthetic-blob";
    }
    return "unknown";
}

SensitivityMap sensitivity_map(const Denoiser& denoiser, const ImageDataset& dataset, double t,
                               std::size_t n_samples, std::uint64_t seed, const SensitivityOptions& options) {
    detail::require_positive_time(t, "sensitivity_map");
    if (n_samples < 1) throw ConfigError("sensitivity_map needs at least one sample");
    if (!(denoiser.shape() == dataset.shape())) throw ShapeMismatch("denoiser and dataset shapes differ");
    const auto batch = sample_forward(dataset, t, n_samples, seed, 0x6772616d);
    return sensitivity_map_at(denoiser, batch.z, t, options);
}

SensitivityMap sensitivity_map_at(const Denoiser& denoiser, std::span<const double> zs, double t,
                                  const SensitivityOptions& options) {
    detail::require_positive_time(t, "sensitivity_map");
    const ImageShape shape = denoiser.shape();
    const std::size_t d = shape.size();
    const std::size_t P = shape.pixels();
    const std::size_t C = shape.channels;
    if (zs.empty() || zs.size() % d != 0) throw ShapeMismatch("observations must be count x dim");
    const std::size_t n_samples = zs.size() / d;

    SensitivityMap result;
    result.t = t;
    result.height = shape.height;
    result.width = shape.width;
    result.samples = n_samples;
    result.values.assign(P * P, 0.0);

    const std::size_t block = std::clamp<std::size_t>(options.memory_budget_bytes / (d * sizeof(double)), 1, d);
    std::vector<double> columns(block * d);
    bool all_analytic = true;

    for (std::size_t k = 0; k < n_samples; ++k) {
        const auto z = zs.subspan(k * d, d);
        const auto probe = options.force_finite_difference ? denoiser.linearize_numerically(z, t, options.fd_step)
                                                           : denoiser.linearize(z, t, options.fd_step);
        all_analytic = all_analytic && probe->analytic();
        for (std::size_t start = 0; start < d; start += block) {
            const std::size_t count = std::min(block, d - start);
            parallel_for(count, [&](std::size_t b) {
                probe->column(start + b, std::span<double>(columns.data() + b * d, d));
            });
            // column j is input (pixel q, channel c); only output channel c contributes
            for (std::size_t b = 0; b < count; ++b) {
                const std::size_t j = start + b;
                const std::size_t q = j / C;
                const std::size_t c = j % C;
                const double* col = columns.data() + b * d;
                for (std::size_t p = 0; p < P; ++p) {
                    result.values[p * P + q] += std::abs(col[p * C + c]);
                }
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(n_samples);
    for (auto& v : result.values) v *= inv;
    result.source = all_analytic ? MapSource::analytic_empirical : MapSource::finite_difference;
    return result;
}

std::size_t concentration_side_length(std::span<const double> map, std::size_t height, std::size_t width,
                                      Pixel anchor, double p) {
    if (map.size() != height * width) throw ShapeMismatch("heatmap size mismatch");
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError("concentration fraction must lie in (0, 1]");
    if (anchor.row >= height || anchor.col >= width) throw ShapeMismatch("anchor outside the heatmap");
    double total = 0.0;
    for (double v : map) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw RangeError("heatmap entries must be finite and nonnegative");
        total += v;
    }
    if (!(total > 0.0)) throw DegenerateHeatmap("heatmap has zero total mass");

    const auto r = static_cast<std::ptrdiff_t>(anchor.row);
    const auto c = static_cast<std::ptrdiff_t>(anchor.col);
    const auto H = static_cast<std::ptrdiff_t>(height);
    const auto W = static_cast<std::ptrdiff_t>(width);
    for (std::ptrdiff_t half = 0;; ++half) {
        const auto r0 = std::max<std::ptrdiff_t>(0, r - half), r1 = std::min(H - 1, r + half);
        const auto c0 = std::max<std::ptrdiff_t>(0, c - half), c1 = std::min(W - 1, c + half);
        double captured = 0.0;
        for (auto i = r0; i <= r1; ++i) {
            for (auto j = c0; j <= c1; ++j) captured += map[static_cast<std::size_t>(i * W + j)];
        }
        const bool whole = r0 == 0 && c0 == 0 && r1 == H - 1 && c1 == W - 1;
        if (captured / total >= p || whole) return static_cast<std::size_t>(2 * half + 1);
    }
}

std::vector<double> aggregate_concentration(const SensitivityMap& smap, std::span<const double> fractions) {
    std::vector<double> means(fractions.size(), 0.0);
    for (std::size_t f = 0; f < fractions.size(); ++f) {
        double sum = 0.0;
        for (std::size_t row = 0; row < smap.height; ++row) {
            for (std::size_t col = 0; col < smap.width; ++col) {
                Pixel anchor{static_cast<std::uint32_t>(row), static_cast<std::uint32_t>(col)};
                sum += static_cast<double>(
                    concentration_side_length(smap.map(row, col), smap.height, smap.width, anchor, fractions[f]));
            }
        }
        means[f] = sum / static_cast<double>(smap.pixels());
    }
    return means;
}

Table concentration_table(std::span<const SensitivityMap> maps, std::span<const double> fractions) {
    std::vector<double> ts, fs_, sides;
    for (const auto& smap : maps) {
        const auto means = aggregate_concentration(smap, fractions);
        for (std::size_t f = 0; f < fractions.size(); ++f) {
            ts.push_back(smap.t);
            fs_.push_back(fractions[f]);
            sides.push_back(means[f]);
        }
    }
    Table table;
    table.add("t", std::move(ts)).add("fraction", std::move(fs_)).add("mean_side", std::move(sides));
    return table;
}

SensitivityMap synthetic_blob_maps(std::size_t height, std::size_t width, double blob_width, double t) {
    if (!(blob_width > 0.0) || !std::isfinite(blob_width)) throw ConfigError("blob width must be positive");
    if (height == 0 || width == 0) throw ConfigError("blob maps need a nonempty image");
    SensitivityMap smap;
    smap.t = t;
    smap.height = height;
    smap.width = width;
    smap.samples = 0;
    smap.source = MapSource::synthetic_blob;
    const std::size_t P = height * width;
    smap.values.resize(P * P);
    const double denom = 2.0 * blob_width * blob_width;
    for (std::size_t x = 0; x < height; ++x) {
        for (std::size_t y = 0; y < width; ++y) {
            double* out = smap.values.data() + (x * width + y) * P;
            for (std::size_t i = 0; i < height; ++i) {
                for (std::size_t j = 0; j < width; ++j) {
                    const double di = static_cast<double>(i) - static_cast<double>(x);
                    const double dj = static_cast<double>(j) - static_cast<double>(y);
                    out[i * width + j] = std::exp(-(di * di + dj * dj) / denom);
                }
            }
        }
    }
    return smap;
}

double BlobWidth::operator()(double t) const {
    detail::require_positive_time(t, "blob width");
    return std::max(scale * std::pow(t, exponent), 1e-6);
}

BlobHeatmaps::BlobHeatmaps(std::size_t height, std::size_t width, BlobWidth width_fn)
    : height_(height), width_(width), width_fn_(width_fn) {
    if (!(width_fn_.scale > 0.0) || !(width_fn_.exponent >= 0.0)) {
        throw ConfigError("blob width needs scale > 0 and exponent >= 0");
    }
}

std::shared_ptr<const SensitivityMap> BlobHeatmaps::maps_for(double t) const {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(t);
    if (it != cache_.end()) return it->second;
    auto maps = std::make_shared<const SensitivityMap>(synthetic_blob_maps(height_, width_, width_fn_(t), t));
    cache_.emplace(t, maps);
    return maps;
}

std::string BlobHeatmaps::describe() const {
    return "blob(scale=" + format_number(width_fn_.scale) + ",exponent=" + format_number(width_fn_.exponent) + ")";
}

HeatmapBank::HeatmapBank(std::vector<SensitivityMap> maps) {
    if (maps.empty()) throw ConfigError("heatmap bank is empty");
    for (auto& m : maps) {
        detail::require_positive_time(m.t, "heatmap bank entry");
        maps_.push_back(std::make_shared<const SensitivityMap>(std::move(m)));
    }
}

std::shared_ptr<const SensitivityMap> HeatmapBank::maps_for(double t) const {
    detail::require_positive_time(t, "heatmap lookup");
    const double lt = std::log(t);
    std::size_t best = 0;
    double best_distance = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < maps_.size(); ++i) {
        const double distance = std::abs(lt - std::log(maps_[i]->t));
        if (distance < best_distance) {
            best_distance = distance;
            best = i;
        }
    }
    return maps_[best];
}

std::string HeatmapBank::describe() const { return "bank(" + std::to_string(maps_.size()) + " maps)"; }

void save_maps(const fs::path& path, std::span<const SensitivityMap> maps, DType dtype) {
    if (maps.empty()) throw ConfigError("no sensitivity maps to save");
    const std::size_t H = maps.front().height, W = maps.front().width;
    Tensor tensor;
    tensor.dtype = dtype;
    if (maps.size() == 1) {
        tensor.dims = {H, W, H, W};
    } else {
        tensor.dims = {maps.size(), H, W, H, W};
    }
    std::vector<double> ts, samples, index;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        const auto& m = maps[i];
        if (m.height != H || m.width != W) throw ShapeMismatch("stacked maps must share one geometry");
        tensor.values.insert(tensor.values.end(), m.values.begin(), m.values.end());
        index.push_back(static_cast<double>(i));
        ts.push_back(m.t);
        samples.push_back(static_cast<double>(m.samples));
    }
    write_tensor_file(path, tensor);
    Table sidecar;
    sidecar.add("index", std::move(index)).add("t", std::move(ts)).add("samples", std::move(samples));
    emit_csv(sidecar, path.string() + ".csv");
}

std::vector<SensitivityMap> load_external_maps(const fs::path& path) {
    const Tensor tensor = read_tensor_file(path);
    std::size_t T = 1;
    std::size_t offset = 0;
    if (tensor.dims.size() == 5) {
        T = tensor.dims[0];
        offset = 1;
    } else if (tensor.dims.size() != 4) {
        throw ShapeMismatch("heatmap tensors must be (H, W, H, W) or (T, H, W, H, W), got rank " +
                            std::to_string(tensor.dims.size()));
    }
    const std::size_t H = tensor.dims[offset], W = tensor.dims[offset + 1];
    if (tensor.dims[offset + 2] != H || tensor.dims[offset + 3] != W) {
        throw ShapeMismatch("heatmap tensor must have matching input and output geometry");
    }
    for (double v : tensor.values) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw RangeError("heatmap entries must be finite and nonnegative");
    }
    std::vector<double> ts(T, 0.0), samples(T, 0.0);
    const fs::path sidecar = path.string() + ".csv";
    if (fs::exists(sidecar)) {
        const Table table = read_csv(sidecar);
        if (table.rows() != T) throw ShapeMismatch("heatmap sidecar row count does not match the tensor");
        ts = table.column("t");
        samples = table.column("samples");
    }
    const std::size_t block = H * W * H * W;
    std::vector<SensitivityMap> maps(T);
    for (std::size_t i = 0; i < T; ++i) {
        auto& m = maps[i];
        m.t = ts[i];
        m.height = H;
        m.width = W;
        m.samples = static_cast<std::size_t>(samples[i]);
        m.source = MapSource::external_file;
        m.values.assign(tensor.values.begin() + static_cast<std::ptrdiff_t>(i * block),
                        tensor.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * block));
    }
    return maps;
}

}  // namespace pspc
