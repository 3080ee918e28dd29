#include "pspc/patch_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pspc/errors.hpp"
#include "pspc/manifest.hpp"
#include "pspc/parallel.hpp"

namespace pspc {

CropSpec make_crop(std::vector<Pixel> pixels, Pixel anchor, std::size_t height, std::size_t width) {
    if (pixels.empty()) {
        throw ConfigError("crop must contain at least one pixel");
    }
    std::sort(pixels.begin(), pixels.end());
    if (std::adjacent_find(pixels.begin(), pixels.end()) != pixels.end()) {
        throw ConfigError("crop pixels must be unique");
    }
    for (const auto& p : pixels) {
        if (p.row >= height || p.col >= width) {
            throw ShapeMismatch("crop pixel (" + std::to_string(p.row) + "," + std::to_string(p.col) +
                                ") outside " + std::to_string(height) + "x" + std::to_string(width));
        }
    }
    return CropSpec{std::move(pixels), anchor};
}

CropSpec full_crop(std::size_t height, std::size_t width) {
    CropSpec crop;
    crop.pixels.reserve(height * width);
    for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
            crop.pixels.push_back({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c)});
        }
    }
    if (crop.pixels.empty()) throw ConfigError("full crop of an empty image");
    return crop;
}

CropSpec square_crop(std::size_t height, std::size_t width, std::size_t row, std::size_t col, std::size_t side) {
    if (side == 0 || row + side > height || col + side > width) {
        throw ConfigError("square crop does not fit inside the image");
    }
    CropSpec crop;
    crop.anchor = {static_cast<std::uint32_t>(row), static_cast<std::uint32_t>(col)};
    crop.pixels.reserve(side * side);
    for (std::size_t r = row; r < row + side; ++r) {
        for (std::size_t c = col; c < col + side; ++c) {
            crop.pixels.push_back({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c)});
        }
    }
    return crop;
}

PatchSet::PatchSet(std::size_t height, std::size_t width, std::vector<CropSpec> crops)
    : height_(height), width_(width), crops_(std::move(crops)), coverage_(height * width, 0) {
    for (const auto& crop : crops_) {
        for (const auto& p : crop.pixels) {
            if (p.row >= height_ || p.col >= width_) {
                throw ShapeMismatch("patch set crop pixel out of bounds");
            }
            ++coverage_[p.row * width_ + p.col];
        }
    }
}

bool PatchSet::covers_all() const {
    return std::all_of(coverage_.begin(), coverage_.end(), [](std::uint32_t c) { return c > 0; });
}

void PatchSet::require_full_coverage() const {
    for (std::size_t i = 0; i < coverage_.size(); ++i) {
        if (coverage_[i] == 0) {
            throw UncoveredPixel("pixel (" + std::to_string(i / width_) + "," + std::to_string(i % width_) +
                                 ") is not covered by any crop");
        }
    }
}

PatchSet square_crop_set(std::size_t height, std::size_t width, std::size_t side) {
    if (side < 1 || side > std::min(height, width)) {
        throw ConfigError("square patch size " + std::to_string(side) + " outside [1, " +
                          std::to_string(std::min(height, width)) + "]");
    }
    std::vector<CropSpec> crops;
    crops.reserve((height - side + 1) * (width - side + 1));
    for (std::size_t r = 0; r + side <= height; ++r) {
        for (std::size_t c = 0; c + side <= width; ++c) {
            crops.push_back(square_crop(height, width, r, c, side));
        }
    }
    return PatchSet(height, width, std::move(crops));
}

CropSpec flex_crop(std::span<const double> heatmap, std::size_t height, std::size_t width, Pixel anchor,
                   double lambda) {
    if (heatmap.size() != height * width) {
        throw ShapeMismatch("heatmap size does not match " + std::to_string(height) + "x" + std::to_string(width));
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ConfigError("flex crop lambda must lie in [0, 1]");
    }
    std::vector<std::uint32_t> order;
    order.reserve(heatmap.size());
    for (std::size_t i = 0; i < heatmap.size(); ++i) {
        const double v = heatmap[i];
        if (!std::isfinite(v) || v < 0.0) {
            throw RangeError("heatmap entries must be finite and nonnegative");
        }
        if (v > 0.0) order.push_back(static_cast<std::uint32_t>(i));
    }
    if (order.empty()) {
        throw DegenerateHeatmap("heatmap for anchor (" + std::to_string(anchor.row) + "," +
                                std::to_string(anchor.col) + ") has no positive entry");
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return heatmap[a] > heatmap[b]; });

    // The total is accumulated in selection order so the full prefix reproduces it exactly.
    double total = 0.0;
    for (auto i : order) total += heatmap[i];

    std::size_t take = order.size();
    if (lambda < 1.0) {
        const double target = lambda * total;
        double captured = 0.0;
        for (std::size_t k = 0; k < order.size(); ++k) {
            captured += heatmap[order[k]];
            if (captured >= target) {
                take = k + 1;
                break;
            }
        }
    }
    std::vector<Pixel> pixels;
    pixels.reserve(take);
    for (std::size_t k = 0; k < take; ++k) {
        pixels.push_back({static_cast<std::uint32_t>(order[k] / width), static_cast<std::uint32_t>(order[k] % width)});
    }
    return make_crop(std::move(pixels), anchor, height, width);
}

PatchSet flex_crop_set(std::span<const double> maps, std::size_t height, std::size_t width, double lambda) {
    const std::size_t pixels = height * width;
    if (maps.size() != pixels * pixels) {
        throw ShapeMismatch("flex crop set needs one " + std::to_string(height) + "x" + std::to_string(width) +
                            " heatmap per output pixel");
    }
    std::vector<CropSpec> crops(pixels);
    parallel_for(pixels, [&](std::size_t a) {
        Pixel anchor{static_cast<std::uint32_t>(a / width), static_cast<std::uint32_t>(a % width)};
        crops[a] = flex_crop(maps.subspan(a * pixels, pixels), height, width, anchor, lambda);
    });
    PatchSet set(height, width, std::move(crops));
    set.require_full_coverage();
    return set;
}

void gather_into(const CropSpec& crop, std::span<const double> image, const ImageShape& shape,
                 std::span<double> out) {
    const std::size_t c = shape.channels;
    if (image.size() != shape.size() || out.size() != crop.flat_size(c)) {
        throw ShapeMismatch("gather: image or patch size mismatch");
    }
    std::size_t k = 0;
    for (const auto& p : crop.pixels) {
        if (p.row >= shape.height || p.col >= shape.width) throw ShapeMismatch("gather: pixel out of bounds");
        const double* src = image.data() + shape.index(p.row, p.col);
        for (std::size_t ch = 0; ch < c; ++ch) out[k++] = src[ch];
    }
}

std::vector<double> gather(const CropSpec& crop, std::span<const double> image, const ImageShape& shape) {
    std::vector<double> out(crop.flat_size(shape.channels));
    gather_into(crop, image, shape, out);
    return out;
}

void scatter_add(const CropSpec& crop, std::span<const double> patch, const ImageShape& shape,
                 std::span<double> accumulator) {
    const std::size_t c = shape.channels;
    if (accumulator.size() != shape.size() || patch.size() != crop.flat_size(c)) {
        throw ShapeMismatch("scatter_add: image or patch size mismatch");
    }
    std::size_t k = 0;
    for (const auto& p : crop.pixels) {
        if (p.row >= shape.height || p.col >= shape.width) throw ShapeMismatch("scatter_add: pixel out of bounds");
        double* dst = accumulator.data() + shape.index(p.row, p.col);
        for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += patch[k++];
    }
}

void save_patch_set(const std::filesystem::path& path, const PatchSet& set, const PatchSetMeta& meta) {
    Tensor t;
    std::size_t members = 0;
    for (const auto& crop : set.crops()) members += crop.pixels.size();
    if (members == 0) throw ConfigError("cannot save an empty patch set");
    t.dims = {members, 5};
    t.values.reserve(members * 5);
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto& crop = set.crops()[i];
        for (const auto& p : crop.pixels) {
            t.values.insert(t.values.end(), {static_cast<double>(i), static_cast<double>(p.row),
                                             static_cast<double>(p.col), static_cast<double>(crop.anchor.row),
                                             static_cast<double>(crop.anchor.col)});
        }
    }
    write_tensor_file(path, t);

    RunManifest sidecar;
    sidecar.set("kind", meta.kind);
    sidecar.set("parameter", meta.parameter);
    sidecar.set("t", meta.t);
    sidecar.set("height", static_cast<std::uint64_t>(set.height()));
    sidecar.set("width", static_cast<std::uint64_t>(set.width()));
    sidecar.set("crops", static_cast<std::uint64_t>(set.size()));
    sidecar.save(path.string() + ".meta");
}

PatchSet load_patch_set(const std::filesystem::path& path, PatchSetMeta* meta) {
    const Tensor t = read_tensor_file(path);
    const RunManifest sidecar = RunManifest::load(path.string() + ".meta");
    if (t.dims.size() != 2 || t.dims[1] != 5) {
        throw ShapeMismatch("patch set tensor must have shape (M, 5)");
    }
    const std::size_t height = sidecar.get_uint("height");
    const std::size_t width = sidecar.get_uint("width");
    const std::size_t count = sidecar.get_uint("crops");
    std::vector<std::vector<Pixel>> members(count);
    std::vector<Pixel> anchors(count);
    for (std::size_t m = 0; m < t.dims[0]; ++m) {
        const double* row = t.values.data() + 5 * m;
        const auto i = static_cast<std::size_t>(row[0]);
        if (i >= count) throw FormatError("patch set row references crop " + std::to_string(i));
        members[i].push_back({static_cast<std::uint32_t>(row[1]), static_cast<std::uint32_t>(row[2])});
        anchors[i] = {static_cast<std::uint32_t>(row[3]), static_cast<std::uint32_t>(row[4])};
    }
    std::vector<CropSpec> crops;
    crops.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        crops.push_back(make_crop(std::move(members[i]), anchors[i], height, width));
    }
    if (meta) {
        meta->kind = sidecar.get("kind");
        meta->parameter = sidecar.get_double("parameter");
        meta->t = sidecar.get_double("t");
    }
    return PatchSet(height, width, std::move(crops));
}

}  // namespace pspc
