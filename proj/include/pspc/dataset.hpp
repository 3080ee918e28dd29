#ifndef PSPC_DATASET_HPP
#define PSPC_DATASET_HPP

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pspc/tensor_file.hpp"

namespace pspc {

/// Channel-last image geometry (H, W, C).
struct ImageShape {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;

    std::size_t pixels() const { return height * width; }
    std::size_t size() const { return height * width * channels; }
    std::size_t index(std::size_t row, std::size_t col, std::size_t channel = 0) const {
        return (row * width + col) * channels + channel;
    }
    bool operator==(const ImageShape&) const = default;
};

using Image = std::vector<double>;

enum class Normalization { u8_to_unit, none };

struct SourceFile {
    std::string path;
    std::string sha256;
};

/**
 * N images of one shape, values in [-1, 1], stored contiguously as
 * N x H x W x C doubles. Immutable after construction.
 */
class ImageDataset {
public:
    ImageDataset(std::string name, ImageShape shape, std::vector<double> values,
                 std::vector<SourceFile> sources = {});

    const std::string& name() const { return name_; }
    const ImageShape& shape() const { return shape_; }
    std::size_t size() const { return count_; }
    std::size_t dim() const { return shape_.size(); }

    std::span<const double> image(std::size_t i) const { return {values_.data() + i * dim(), dim()}; }
    std::span<const double> values() const { return values_; }
    const std::vector<SourceFile>& sources() const { return sources_; }

    /// SHA-256 over the shape and the f64 little-endian payload.
    const std::string& hash() const { return hash_; }

    double min_value() const;
    double max_value() const;
    Image mean() const;

    Tensor to_tensor(DType dtype = DType::f64) const;

private:
    std::string name_;
    ImageShape shape_;
    std::size_t count_ = 0;
    std::vector<double> values_;
    std::vector<SourceFile> sources_;
    std::string hash_;
};

/// 8-bit value v maps to 2 * (v / 255) - 1.
double u8_to_unit(unsigned value);

/**
 * Load a directory of lossless 8-bit rasters (PNG, binary PGM/PPM) in
 * filename-lexicographic order, or a rank-4 (N, H, W, C) tensor file.
 */
ImageDataset load_dataset(const std::filesystem::path& path, Normalization normalization);

std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_file(const std::filesystem::path& path);

struct RasterImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<unsigned char> pixels;
};

RasterImage read_raster(const std::filesystem::path& path);
/// Writes PNG when the extension is .png, binary PGM/PPM otherwise.
void write_raster(const std::filesystem::path& path, const RasterImage& image);

}  // namespace pspc

#endif
