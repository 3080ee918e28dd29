#include "pspc/tensor_file.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "pspc/errors.hpp"

namespace pspc {

namespace {

constexpr char magic[4] = {'P', 'S', 'P', 'C'};

template <typename T>
void put_le(std::vector<std::byte>& out, T value) {
    std::byte raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(std::begin(raw), std::end(raw));
    }
    out.insert(out.end(), std::begin(raw), std::end(raw));
}

template <typename T>
T get_le(std::span<const std::byte> bytes, std::size_t offset) {
    std::byte raw[sizeof(T)];
    std::memcpy(raw, bytes.data() + offset, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        std::reverse(std::begin(raw), std::end(raw));
    }
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
}

std::size_t checked_count(std::span<const std::uint64_t> dims) {
    std::size_t count = 1;
    for (auto d : dims) {
        if (d == 0) {
            throw FormatError("tensor dims must all be >= 1");
        }
        if (count > SIZE_MAX / d) {
            throw FormatError("tensor element count overflows");
        }
        count *= static_cast<std::size_t>(d);
    }
    return count;
}

}  // namespace

std::size_t Tensor::count() const { return checked_count(dims); }

std::size_t tensor_header_size(std::size_t ndim) { return 4 + 4 + 4 + 4 + 8 * ndim; }

std::vector<std::byte> encode_tensor(const Tensor& tensor) {
    if (tensor.dims.empty()) {
        throw FormatError("tensor must have ndim >= 1");
    }
    if (tensor.count() != tensor.values.size()) {
        throw ShapeMismatch("tensor dims describe " + std::to_string(tensor.count()) +
                            " values but " + std::to_string(tensor.values.size()) + " were given");
    }
    std::vector<std::byte> out;
    out.reserve(tensor_header_size(tensor.dims.size()) + tensor.values.size() * dtype_size(tensor.dtype));
    for (char c : magic) {
        out.push_back(static_cast<std::byte>(c));
    }
    put_le<std::uint32_t>(out, tensor_format_version);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.dtype));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.dims.size()));
    for (auto d : tensor.dims) {
        put_le<std::uint64_t>(out, d);
    }
    if (tensor.dtype == DType::f32) {
        for (double v : tensor.values) {
            put_le<float>(out, static_cast<float>(v));
        }
    } else {
        for (double v : tensor.values) {
            put_le<double>(out, v);
        }
    }
    return out;
}

Tensor decode_tensor(std::span<const std::byte> bytes) {
    if (bytes.size() < tensor_header_size(0)) {
        throw FormatError("tensor file truncated in header");
    }
    if (std::memcmp(bytes.data(), magic, 4) != 0) {
        throw FormatError("bad tensor magic");
    }
    const auto version = get_le<std::uint32_t>(bytes, 4);
    if (version != tensor_format_version) {
        throw FormatError("unsupported tensor version " + std::to_string(version));
    }
    const auto dtype_code = get_le<std::uint32_t>(bytes, 8);
    if (dtype_code > 1) {
        throw FormatError("unknown tensor dtype code " + std::to_string(dtype_code));
    }
    const auto ndim = get_le<std::uint32_t>(bytes, 12);
    if (ndim == 0) {
        throw FormatError("tensor must have ndim >= 1");
    }
    if (bytes.size() < tensor_header_size(ndim)) {
        throw FormatError("tensor file truncated in dims");
    }

    Tensor tensor;
    tensor.dtype = static_cast<DType>(dtype_code);
    tensor.dims.resize(ndim);
    for (std::uint32_t i = 0; i < ndim; ++i) {
        tensor.dims[i] = get_le<std::uint64_t>(bytes, 16 + 8 * i);
    }
    const std::size_t count = checked_count(tensor.dims);
    const std::size_t width = dtype_size(tensor.dtype);
    const std::size_t offset = tensor_header_size(ndim);
    if (count > (bytes.size() - offset) / width || bytes.size() - offset != count * width) {
        throw FormatError("tensor payload has " + std::to_string(bytes.size() - offset) +
                          " bytes, expected " + std::to_string(count) + " x " + std::to_string(width));
    }
    tensor.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        tensor.values[i] = tensor.dtype == DType::f32
                               ? static_cast<double>(get_le<float>(bytes, offset + i * width))
                               : get_le<double>(bytes, offset + i * width);
    }
    return tensor;
}

void write_tensor_file(const std::filesystem::path& path, const Tensor& tensor) {
    const auto bytes = encode_tensor(tensor);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw FormatError("short write to " + path.string());
    }
}

Tensor read_tensor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_tensor(std::as_bytes(std::span<const char>(raw)));
}

}  // namespace pspc
