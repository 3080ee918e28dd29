#ifndef PSPC_TENSOR_FILE_HPP
#define PSPC_TENSOR_FILE_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pspc {

enum class DType : std::uint32_t { f32 = 0, f64 = 1 };

inline std::size_t dtype_size(DType dtype) { return dtype == DType::f32 ? 4 : 8; }

/**
 * Dense row-major tensor as exchanged through the binary tensor format.
 *
 * Values are held in double precision regardless of the on-disk dtype;
 * every f32 value is exactly representable as a double, so a tensor read
 * from an f32 file writes back bit-identically.
 */
struct Tensor {
    std::vector<std::uint64_t> dims;
    std::vector<double> values;
    DType dtype = DType::f64;

    std::size_t count() const;
};

inline constexpr std::uint32_t tensor_format_version = 1;

/// Header layout: "PSPC", u32 version, u32 dtype, u32 ndim, ndim x u64 dims, all little-endian.
std::size_t tensor_header_size(std::size_t ndim);

std::vector<std::byte> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(std::span<const std::byte> bytes);

void write_tensor_file(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor_file(const std::filesystem::path& path);

}  // namespace pspc

#endif
