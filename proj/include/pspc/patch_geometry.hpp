#ifndef PSPC_PATCH_GEOMETRY_HPP
#define PSPC_PATCH_GEOMETRY_HPP

#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pspc/dataset.hpp"

namespace pspc {

struct Pixel {
    std::uint32_t row = 0;
    std::uint32_t col = 0;

    auto operator<=>(const Pixel&) const = default;
};

/**
 * A cropping operator held as the set of member pixels. Every channel of
 * a member pixel belongs to the crop. Pixels are unique and row-major.
 *
 * For square crops the anchor is the top-left corner; for flex crops it
 * is the output pixel whose heatmap produced the crop.
 */
struct CropSpec {
    std::vector<Pixel> pixels;
    Pixel anchor;

    std::size_t flat_size(std::size_t channels) const { return pixels.size() * channels; }
    bool operator==(const CropSpec&) const = default;
};

/// Sorts pixels row-major and checks uniqueness and bounds.
CropSpec make_crop(std::vector<Pixel> pixels, Pixel anchor, std::size_t height, std::size_t width);

CropSpec full_crop(std::size_t height, std::size_t width);
CropSpec square_crop(std::size_t height, std::size_t width, std::size_t row, std::size_t col, std::size_t side);

class PatchSet {
public:
    PatchSet() = default;
    PatchSet(std::size_t height, std::size_t width, std::vector<CropSpec> crops);

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    const std::vector<CropSpec>& crops() const { return crops_; }
    std::size_t size() const { return crops_.size(); }

    /// coverage[r * W + c] = number of crops containing (r, c).
    const std::vector<std::uint32_t>& coverage() const { return coverage_; }
    bool covers_all() const;
    /// Throws UncoveredPixel naming the first uncovered pixel.
    void require_full_coverage() const;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<CropSpec> crops_;
    std::vector<std::uint32_t> coverage_;
};

/// All side x side crops with top-left corners in [0, H - s] x [0, W - s]; no padding.
PatchSet square_crop_set(std::size_t height, std::size_t width, std::size_t side);

/**
 * Greedy mass-capture crop: pixels are taken in descending heatmap value
 * (ties row-major) until the captured mass reaches lambda times the total.
 * At least one pixel is always returned, and lambda = 1 returns exactly
 * the positive pixels. The anchor pixel is not forced into the crop.
 */
CropSpec flex_crop(std::span<const double> heatmap, std::size_t height, std::size_t width, Pixel anchor,
                   double lambda);

/// One flex crop per output pixel from H*W maps laid out (H, W, H, W).
PatchSet flex_crop_set(std::span<const double> maps, std::size_t height, std::size_t width, double lambda);

std::vector<double> gather(const CropSpec& crop, std::span<const double> image, const ImageShape& shape);
void gather_into(const CropSpec& crop, std::span<const double> image, const ImageShape& shape,
                 std::span<double> out);
void scatter_add(const CropSpec& crop, std::span<const double> patch, const ImageShape& shape,
                 std::span<double> accumulator);

/**
 * Serialized as a (M, 5) f64 tensor of rows (crop, row, col, anchor_row,
 * anchor_col) plus a key=value sidecar at <path>.meta.
 */
struct PatchSetMeta {
    std::string kind;  // "square", "flex", "custom"
    double parameter = 0.0;  // side length or lambda
    double t = 0.0;
};

void save_patch_set(const std::filesystem::path& path, const PatchSet& set, const PatchSetMeta& meta);
PatchSet load_patch_set(const std::filesystem::path& path, PatchSetMeta* meta = nullptr);

}  // namespace pspc

#endif
