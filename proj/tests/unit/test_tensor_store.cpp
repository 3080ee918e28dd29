#include <doctest.h>

#include <cstring>
#include <fstream>
#include <limits>

#include "pspc/csv.hpp"
#include "pspc/dataset.hpp"
#include "pspc/errors.hpp"
#include "pspc/manifest.hpp"
#include "pspc/tensor_file.hpp"
#include "scratch.hpp"
#include "support.hpp"

using namespace pspc;

namespace {

std::vector<std::byte> bytes_of(std::initializer_list<unsigned> raw) {
    std::vector<std::byte> out;
    for (unsigned b : raw) out.push_back(static_cast<std::byte>(b));
    return out;
}

void put_u32(std::vector<std::byte>& out, std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out[at + i] = static_cast<std::byte>((v >> (8 * i)) & 0xff);
}

}  // namespace

TEST_CASE("tensor header layout for a single f64") {
    Tensor t{{1}, {0.5}, DType::f64};
    const auto bytes = encode_tensor(t);
    // magic, version, dtype, ndim, one u64 dim, one f64 value
    CHECK(bytes.size() == 4 + 4 + 4 + 4 + 8 + 8);
    CHECK(tensor_header_size(1) == 24);
    CHECK(std::memcmp(bytes.data(), "PSPC", 4) == 0);
    CHECK(bytes[4] == std::byte{1});
    CHECK(bytes[8] == std::byte{1});
    CHECK(bytes[12] == std::byte{1});
    CHECK(bytes[16] == std::byte{1});
    double v;
    std::memcpy(&v, bytes.data() + 24, 8);
    CHECK(v == 0.5);
}

TEST_CASE("tensor round trip is bitwise for f32 and f64") {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<float> uf(-1e6f, 1e6f);
    Tensor f32{{10, 100}, {}, DType::f32};
    for (int i = 0; i < 1000; ++i) f32.values.push_back(static_cast<double>(uf(gen)));
    const auto back32 = decode_tensor(encode_tensor(f32));
    CHECK(back32.dims == f32.dims);
    CHECK(back32.dtype == DType::f32);
    CHECK(testing::bitwise_equal(back32.values, f32.values));

    Tensor f64{{2, 3, 4}, testing::random_vector(24, 3, 1e3), DType::f64};
    f64.values[0] = -0.0;
    f64.values[1] = std::numeric_limits<double>::denorm_min();
    f64.values[2] = std::numeric_limits<double>::infinity();
    const auto back64 = decode_tensor(encode_tensor(f64));
    CHECK(testing::bitwise_equal(back64.values, f64.values));
    CHECK(encode_tensor(back64) == encode_tensor(f64));
}

TEST_CASE("tensor files round trip through disk") {
    ScratchDir dir;
    Tensor t{{3, 2}, {1, 2, 3, 4, 5, 6}, DType::f64};
    write_tensor_file(dir / "a.tensor", t);
    const auto back = read_tensor_file(dir / "a.tensor");
    CHECK(back.dims == t.dims);
    CHECK(back.values == t.values);
}

TEST_CASE("malformed tensors are rejected") {
    Tensor t{{2}, {1.0, 2.0}, DType::f64};
    auto good = encode_tensor(t);

    auto bad_magic = good;
    bad_magic[0] = std::byte{'X'};
    CHECK_THROWS_AS(decode_tensor(bad_magic), FormatError);

    auto bad_version = good;
    put_u32(bad_version, 4, 99);
    CHECK_THROWS_AS(decode_tensor(bad_version), FormatError);

    auto bad_dtype = good;
    put_u32(bad_dtype, 8, 7);
    CHECK_THROWS_AS(decode_tensor(bad_dtype), FormatError);

    auto zero_ndim = bytes_of({'P', 'S', 'P', 'C', 1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0});
    CHECK_THROWS_AS(decode_tensor(zero_ndim), FormatError);

    auto truncated = good;
    truncated.pop_back();
    CHECK_THROWS_AS(decode_tensor(truncated), FormatError);

    auto trailing = good;
    trailing.push_back(std::byte{0});
    CHECK_THROWS_AS(decode_tensor(trailing), FormatError);

    CHECK_THROWS_AS(decode_tensor(std::span<const std::byte>(good.data(), 10)), FormatError);
    CHECK_THROWS_AS(encode_tensor(Tensor{{3}, {1.0, 2.0}, DType::f64}), ShapeMismatch);
    CHECK_THROWS_AS(encode_tensor(Tensor{{0}, {}, DType::f64}), FormatError);
}

TEST_CASE("csv emission") {
    Table table;
    table.add("t", {1.0}).add("mse", {0.25});
    CHECK(format_csv(table) == "t,mse\n1,0.25\n");

    Table empty;
    empty.add("a", {}).add("b", {});
    CHECK(format_csv(empty) == "a,b\n");

    Table ragged;
    ragged.add("a", {1.0, 2.0}).add("b", {1.0});
    CHECK_THROWS_AS(format_csv(ragged), ShapeMismatch);
}

TEST_CASE("csv values survive a write and re-parse exactly") {
    ScratchDir dir;
    Table table;
    auto a = testing::random_vector(50, 11, 1e-3);
    a.push_back(1.0 / 3.0);
    a.push_back(-1e-300);
    a.push_back(123456789.123456789);
    table.add("x", a);
    emit_csv(table, dir / "x.csv");
    std::ifstream in(dir / "x.csv", std::ios::binary);
    const std::string text((std::istreambuf_iterator<char>(in)), {});
    CHECK(text.find('\r') == std::string::npos);
    const auto back = read_csv(dir / "x.csv");
    CHECK(testing::bitwise_equal(back.column("x"), a));
}

TEST_CASE("manifest round trip") {
    ScratchDir dir;
    RunManifest m;
    m.set("seed", std::uint64_t{18446744073709551615ull});
    m.set("t", 1.0 / 3.0);
    m.set("dataset_hash", std::string("abc"));
    CHECK(m.get("tool_version") == std::string(tool_version));
    m.save(dir / "run.manifest");
    const auto back = RunManifest::load(dir / "run.manifest");
    CHECK(back == m);
    CHECK(back.seed() == 18446744073709551615ull);
    CHECK(back.get_double("t") == 1.0 / 3.0);
    CHECK_THROWS_AS(back.get("missing"), MissingData);
}

TEST_CASE("u8 normalization") {
    CHECK(u8_to_unit(255) == 1.0);
    CHECK(u8_to_unit(0) == -1.0);
    using testing::mp;
    const double oracle = static_cast<double>(mp(2) * (mp(128) / mp(255)) - mp(1));
    CHECK(std::abs(u8_to_unit(128) - oracle) < 1e-16);
    CHECK(u8_to_unit(128) == doctest::Approx(0.00392156862745098));
}

TEST_CASE("dataset from a raster directory") {
    ScratchDir dir;
    RasterImage a{2, 2, 3, {0, 128, 255, 10, 20, 30, 40, 50, 60, 70, 80, 90}};
    RasterImage b{2, 2, 3, {255, 255, 255, 0, 0, 0, 1, 2, 3, 4, 5, 6}};
    write_raster(dir / "b.png", b);
    write_raster(dir / "a.ppm", a);
    const auto ds = load_dataset(dir.path(), Normalization::u8_to_unit);
    REQUIRE(ds.size() == 2);
    CHECK(ds.shape() == ImageShape{2, 2, 3});
    // lexicographic order: a.ppm before b.png
    CHECK(ds.image(0)[0] == -1.0);
    CHECK(ds.image(0)[2] == 1.0);
    CHECK(ds.image(1)[0] == 1.0);
    CHECK(ds.min_value() >= -1.0);
    CHECK(ds.max_value() <= 1.0);
    CHECK(ds.sources().size() == 2);

    const auto again = load_dataset(dir.path(), Normalization::u8_to_unit);
    CHECK(again.hash() == ds.hash());
    CHECK(testing::bitwise_equal(again.values(), ds.values()));

    CHECK_THROWS_AS(load_dataset(dir.path(), Normalization::none), RangeError);
}

TEST_CASE("dataset ingestion errors") {
    ScratchDir dir;
    CHECK_THROWS_AS(load_dataset(dir.path(), Normalization::u8_to_unit), EmptyDataset);
    write_raster(dir / "a.pgm", RasterImage{2, 2, 1, {0, 1, 2, 3}});
    write_raster(dir / "b.pgm", RasterImage{3, 2, 1, {0, 1, 2, 3, 4, 5}});
    CHECK_THROWS_AS(load_dataset(dir.path(), Normalization::u8_to_unit), ShapeMismatch);

    ScratchDir raw;
    write_raster(raw / "a.pgm", RasterImage{1, 1, 1, {200}});
    CHECK_THROWS_AS(load_dataset(raw.path(), Normalization::none), RangeError);

    CHECK_THROWS_AS(ImageDataset("x", {2, 2, 2}, std::vector<double>(8, 0.0)), ShapeMismatch);
    CHECK_THROWS_AS(ImageDataset("x", {2, 2, 1}, std::vector<double>(5, 0.0)), ShapeMismatch);
    CHECK_THROWS_AS(ImageDataset("x", {2, 2, 1}, std::vector<double>{}), EmptyDataset);
    CHECK_THROWS_AS(ImageDataset("x", {1, 1, 1}, std::vector<double>{1.5}), RangeError);
}

TEST_CASE("dataset from a rank-4 tensor keeps its payload") {
    ScratchDir dir;
    Tensor t{{4, 8, 8, 3}, {}, DType::f64};
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 4 * 8 * 8 * 3; ++i) t.values.push_back(u(gen));
    write_tensor_file(dir / "d.tensor", t);
    const auto ds = load_dataset(dir / "d.tensor", Normalization::none);
    CHECK(ds.size() == 4);
    CHECK(ds.shape() == ImageShape{8, 8, 3});
    CHECK(encode_tensor(ds.to_tensor()) == encode_tensor(t));

    write_tensor_file(dir / "r3.tensor", Tensor{{2, 2, 2}, std::vector<double>(8, 0.0), DType::f64});
    CHECK_THROWS_AS(load_dataset(dir / "r3.tensor", Normalization::none), ShapeMismatch);
}
