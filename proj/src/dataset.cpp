#include "pspc/dataset.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <numeric>

#include "pspc/errors.hpp"

namespace pspc {

namespace fs = std::filesystem;

std::string sha256_hex(std::span<const std::byte> bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &length) != 1) {
        throw Error("SHA-256 computation failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < length; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

namespace {

std::vector<std::byte> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::byte> out(raw.size());
    std::memcpy(out.data(), raw.data(), raw.size());
    return out;
}

std::string dataset_hash(const ImageShape& shape, std::size_t count, std::span<const double> values) {
    Tensor t;
    t.dims = {count, shape.height, shape.width, shape.channels};
    t.values.assign(values.begin(), values.end());
    return sha256_hex(encode_tensor(t));
}

bool has_extension(const fs::path& path, std::initializer_list<const char*> extensions) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return std::any_of(extensions.begin(), extensions.end(), [&](const char* e) { return ext == e; });
}

RasterImage read_png(const fs::path& path) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str())) {
        throw FormatError(path.string() + ": " + png.message);
    }
    if (png.format & PNG_FORMAT_FLAG_LINEAR) {
        png_image_free(&png);
        throw FormatError(path.string() + ": only 8-bit rasters are supported");
    }
    if (png.format & PNG_FORMAT_FLAG_ALPHA) {
        png_image_free(&png);
        throw FormatError(path.string() + ": alpha channels are not supported");
    }
    const bool color = png.format & PNG_FORMAT_FLAG_COLOR;
    png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    RasterImage image{png.height, png.width, color ? 3u : 1u, {}};
    image.pixels.resize(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, image.pixels.data(), 0, nullptr)) {
        std::string message = png.message;
        png_image_free(&png);
        throw FormatError(path.string() + ": " + message);
    }
    return image;
}

// Binary netpbm (P5 gray, P6 rgb) with maxval 255.
RasterImage read_pnm(const fs::path& path) {
    const auto bytes = read_bytes(path);
    std::size_t pos = 0;
    auto next_token = [&]() {
        while (pos < bytes.size()) {
            auto c = static_cast<char>(bytes[pos]);
            if (c == '#') {
                while (pos < bytes.size() && static_cast<char>(bytes[pos]) != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos;
            } else {
                break;
            }
        }
        std::string token;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
            token += static_cast<char>(bytes[pos++]);
        }
        if (token.empty()) throw FormatError(path.string() + ": truncated netpbm header");
        return token;
    };
    const auto kind = next_token();
    if (kind != "P5" && kind != "P6") {
        throw FormatError(path.string() + ": unsupported netpbm type " + kind);
    }
    RasterImage image;
    image.channels = kind == "P6" ? 3 : 1;
    try {
        image.width = std::stoul(next_token());
        image.height = std::stoul(next_token());
        if (std::stoul(next_token()) != 255) {
            throw FormatError(path.string() + ": only maxval 255 is supported");
        }
    } catch (const std::logic_error&) {
        throw FormatError(path.string() + ": malformed netpbm header");
    }
    ++pos;  // single whitespace before raster data
    const std::size_t expected = image.height * image.width * image.channels;
    if (image.height == 0 || image.width == 0 || bytes.size() < pos || bytes.size() - pos != expected) {
        throw FormatError(path.string() + ": netpbm payload size mismatch");
    }
    image.pixels.resize(expected);
    std::memcpy(image.pixels.data(), bytes.data() + pos, expected);
    return image;
}

}  // namespace

std::string sha256_file(const fs::path& path) { return sha256_hex(read_bytes(path)); }

RasterImage read_raster(const fs::path& path) {
    if (has_extension(path, {".png"})) return read_png(path);
    if (has_extension(path, {".pgm", ".ppm", ".pnm"})) return read_pnm(path);
    throw FormatError(path.string() + ": not a supported lossless raster (png, pgm, ppm)");
}

void write_raster(const fs::path& path, const RasterImage& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw ShapeMismatch("rasters must have 1 or 3 channels");
    }
    if (image.pixels.size() != image.height * image.width * image.channels) {
        throw ShapeMismatch("raster pixel buffer does not match its shape");
    }
    if (has_extension(path, {".png"})) {
        png_image png;
        std::memset(&png, 0, sizeof(png));
        png.version = PNG_IMAGE_VERSION;
        png.width = static_cast<png_uint_32>(image.width);
        png.height = static_cast<png_uint_32>(image.height);
        png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
        if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
            throw FormatError(path.string() + ": " + png.message);
        }
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    out << (image.channels == 3 ? "P6" : "P5") << '\n' << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
}

double u8_to_unit(unsigned value) { return 2.0 * (static_cast<double>(value) / 255.0) - 1.0; }

ImageDataset::ImageDataset(std::string name, ImageShape shape, std::vector<double> values,
                           std::vector<SourceFile> sources)
    : name_(std::move(name)), shape_(shape), values_(std::move(values)), sources_(std::move(sources)) {
    if (shape_.channels != 1 && shape_.channels != 3) {
        throw ShapeMismatch("images must have 1 or 3 channels, got " + std::to_string(shape_.channels));
    }
    if (shape_.height == 0 || shape_.width == 0) {
        throw ShapeMismatch("image height and width must be positive");
    }
    if (values_.empty()) {
        throw EmptyDataset("dataset '" + name_ + "' has no images");
    }
    if (values_.size() % shape_.size() != 0) {
        throw ShapeMismatch("dataset payload is not a whole number of images");
    }
    count_ = values_.size() / shape_.size();
    for (double v : values_) {
        if (!(v >= -1.0 && v <= 1.0)) {
            throw RangeError("dataset value " + std::to_string(v) + " outside [-1, 1]");
        }
    }
    hash_ = dataset_hash(shape_, count_, values_);
}

double ImageDataset::min_value() const { return *std::min_element(values_.begin(), values_.end()); }

double ImageDataset::max_value() const { return *std::max_element(values_.begin(), values_.end()); }

Image ImageDataset::mean() const {
    Image mu(dim(), 0.0);
    for (std::size_t i = 0; i < count_; ++i) {
        auto x = image(i);
        for (std::size_t k = 0; k < mu.size(); ++k) mu[k] += x[k];
    }
    for (auto& v : mu) v /= static_cast<double>(count_);
    return mu;
}

Tensor ImageDataset::to_tensor(DType dtype) const {
    Tensor t;
    t.dims = {count_, shape_.height, shape_.width, shape_.channels};
    t.values = values_;
    t.dtype = dtype;
    return t;
}

ImageDataset load_dataset(const fs::path& path, Normalization normalization) {
    auto apply = [&](double v) {
        return normalization == Normalization::u8_to_unit ? 2.0 * (v / 255.0) - 1.0 : v;
    };

    if (fs::is_regular_file(path)) {
        Tensor tensor = read_tensor_file(path);
        if (tensor.dims.size() != 4) {
            throw ShapeMismatch("dataset tensor must be rank 4 (N, H, W, C)");
        }
        ImageShape shape{tensor.dims[1], tensor.dims[2], tensor.dims[3]};
        for (auto& v : tensor.values) v = apply(v);
        return ImageDataset(path.stem().string(), shape, std::move(tensor.values),
                            {{path.string(), sha256_file(path)}});
    }
    if (!fs::is_directory(path)) {
        throw FormatError(path.string() + " is neither a directory nor a tensor file");
    }

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    if (files.empty()) {
        throw EmptyDataset(path.string() + " contains no images");
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });

    ImageShape shape;
    std::vector<double> values;
    std::vector<SourceFile> sources;
    for (const auto& file : files) {
        RasterImage raster = read_raster(file);
        ImageShape this_shape{raster.height, raster.width, raster.channels};
        if (sources.empty()) {
            shape = this_shape;
        } else if (!(this_shape == shape)) {
            throw ShapeMismatch(file.string() + " has shape " + std::to_string(raster.height) + "x" +
                                std::to_string(raster.width) + "x" + std::to_string(raster.channels) +
                                ", expected " + std::to_string(shape.height) + "x" + std::to_string(shape.width) +
                                "x" + std::to_string(shape.channels));
        }
        for (unsigned char v : raster.pixels) values.push_back(apply(static_cast<double>(v)));
        sources.push_back({file.filename().string(), sha256_file(file)});
    }
    return ImageDataset(path.filename().string(), shape, std::move(values), std::move(sources));
}

}  // namespace pspc
