#include <doctest.h>

#include "pspc/errors.hpp"
#include "pspc/patch_geometry.hpp"
#include "pspc/sensitivity.hpp"
#include "scratch.hpp"
#include "support.hpp"

using namespace pspc;

namespace {

std::vector<std::uint32_t> dense_coverage(const PatchSet& set) {
    // diagonal of sum C^T C from explicit selection matrices
    const std::size_t d = set.height() * set.width();
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (const auto& crop : set.crops()) {
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(crop.pixels.size()),
                                                  static_cast<Eigen::Index>(d));
        for (std::size_t k = 0; k < crop.pixels.size(); ++k) {
            M(static_cast<Eigen::Index>(k), crop.pixels[k].row * set.width() + crop.pixels[k].col) = 1.0;
        }
        acc += M.transpose() * M;
    }
    std::vector<std::uint32_t> out(d);
    for (std::size_t i = 0; i < d; ++i) out[i] = static_cast<std::uint32_t>(acc(i, i));
    return out;
}

std::vector<double> uniform_maps(std::size_t H, std::size_t W) {
    return std::vector<double>(H * W * H * W, 1.0);
}

std::vector<double> delta_maps(std::size_t H, std::size_t W) {
    std::vector<double> maps(H * W * H * W, 0.0);
    for (std::size_t p = 0; p < H * W; ++p) maps[p * H * W + p] = 1.0;
    return maps;
}

}  // namespace

TEST_CASE("square crop sets") {
    const auto s3 = square_crop_set(4, 4, 3);
    CHECK(s3.size() == 4);
    const auto& cov = s3.coverage();
    CHECK(cov[0] == 1);
    CHECK(cov[3] == 1);
    CHECK(cov[12] == 1);
    CHECK(cov[15] == 1);
    CHECK(cov[5] == 4);
    CHECK(cov[6] == 4);
    CHECK(cov[9] == 4);
    CHECK(cov[10] == 4);

    const auto full = square_crop_set(5, 5, 5);
    CHECK(full.size() == 1);
    for (auto c : full.coverage()) CHECK(c == 1);

    const auto big = square_crop_set(32, 32, 3);
    CHECK(big.size() == 900);
    std::vector<std::uint32_t> brute(32 * 32, 0);
    for (int r0 = 0; r0 < 30; ++r0)
        for (int c0 = 0; c0 < 30; ++c0)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) ++brute[(r0 + i) * 32 + c0 + j];
    CHECK(big.coverage() == brute);
    CHECK(big.coverage()[5 * 32 + 7] == 9);

    const auto rect = square_crop_set(3, 5, 2);
    CHECK(rect.size() == 2 * 4);

    CHECK_THROWS_AS(square_crop_set(4, 4, 0), ConfigError);
    CHECK_THROWS_AS(square_crop_set(4, 4, 5), ConfigError);
    CHECK_THROWS_AS(square_crop_set(3, 5, 4), ConfigError);
}

TEST_CASE("coverage equals the dense selection-matrix diagonal") {
    for (std::size_t s = 1; s <= 6; ++s) {
        const auto set = square_crop_set(6, 8, s);
        CHECK(set.coverage() == dense_coverage(set));
    }
    const auto blobs = synthetic_blob_maps(7, 5, 1.3);
    for (double lambda : {0.0, 0.3, 0.7, 1.0}) {
        const auto set = flex_crop_set(blobs.values, 7, 5, lambda);
        CHECK(set.coverage() == dense_coverage(set));
    }
}

TEST_CASE("crop validation") {
    CHECK_THROWS_AS(make_crop({}, {0, 0}, 2, 2), ConfigError);
    CHECK_THROWS_AS(make_crop({{0, 0}, {0, 0}}, {0, 0}, 2, 2), ConfigError);
    CHECK_THROWS_AS(make_crop({{2, 0}}, {0, 0}, 2, 2), ShapeMismatch);
    const auto crop = make_crop({{1, 1}, {0, 1}, {1, 0}}, {0, 0}, 2, 2);
    // canonical row-major member order
    CHECK(crop.pixels == std::vector<Pixel>{{0, 1}, {1, 0}, {1, 1}});
    CHECK(crop.flat_size(3) == 9);
    CHECK_THROWS_AS(PatchSet(2, 2, {make_crop({{0, 0}}, {0, 0}, 2, 2)}).require_full_coverage(), UncoveredPixel);
}

TEST_CASE("flex crops follow the greedy rule") {
    const std::vector<double> map{0.4, 0.3, 0.2, 0.1};
    const auto half = flex_crop(map, 2, 2, {0, 0}, 0.5);
    CHECK(half.pixels == std::vector<Pixel>{{0, 0}, {0, 1}});
    const auto zero = flex_crop(map, 2, 2, {1, 1}, 0.0);
    CHECK(zero.pixels == std::vector<Pixel>{{0, 0}});
    CHECK(zero.anchor == Pixel{1, 1});
    const auto uniform = flex_crop(std::vector<double>(9, 2.0), 3, 3, {1, 1}, 1.0);
    CHECK(uniform.pixels.size() == 9);
    // lambda = 1 keeps the positive pixels only
    const auto sparse = flex_crop(std::vector<double>{0.0, 3.0, 0.0, 1.0}, 2, 2, {0, 0}, 1.0);
    CHECK(sparse.pixels == std::vector<Pixel>{{0, 1}, {1, 1}});
    // ties broken row-major: (0,1) precedes (1,0)
    const auto tie = flex_crop(std::vector<double>{0.0, 1.0, 1.0, 0.0}, 2, 2, {0, 0}, 0.5);
    CHECK(tie.pixels == std::vector<Pixel>{{0, 1}});

    CHECK_THROWS_AS(flex_crop(std::vector<double>(4, 0.0), 2, 2, {0, 0}, 0.5), DegenerateHeatmap);
    CHECK_THROWS_AS(flex_crop(map, 2, 2, {0, 0}, 1.5), ConfigError);
    CHECK_THROWS_AS(flex_crop(map, 2, 2, {0, 0}, -0.1), ConfigError);
    CHECK_THROWS_AS(flex_crop(map, 3, 2, {0, 0}, 0.5), ShapeMismatch);
}

TEST_CASE("flex crop sets: delta, uniform and blob maps") {
    const std::size_t H = 5, W = 4;
    for (double lambda : {0.0, 0.5, 1.0}) {
        const auto set = flex_crop_set(delta_maps(H, W), H, W, lambda);
        REQUIRE(set.size() == H * W);
        for (std::size_t p = 0; p < H * W; ++p) {
            CHECK(set.crops()[p].pixels.size() == 1);
            CHECK(set.crops()[p].pixels[0] == set.crops()[p].anchor);
        }
        for (auto c : set.coverage()) CHECK(c == 1);
    }
    const auto full = flex_crop_set(uniform_maps(H, W), H, W, 1.0);
    for (auto c : full.coverage()) CHECK(c == H * W);

    const auto blobs = synthetic_blob_maps(8, 8, 1.5);
    const auto set = flex_crop_set(blobs.values, 8, 8, 0.5);
    for (std::size_t p = 0; p < 64; ++p) {
        const auto oracle = testing::greedy_oracle(blobs.map(p / 8, p % 8), 8, 0.5);
        auto sorted = oracle;
        std::sort(sorted.begin(), sorted.end());
        CHECK(set.crops()[p].pixels == sorted);
        // compact: every member lies within 2 pixels of the anchor
        for (const auto& px : set.crops()[p].pixels) {
            CHECK(std::abs(int(px.row) - int(p / 8)) <= 2);
            CHECK(std::abs(int(px.col) - int(p % 8)) <= 2);
        }
    }
    CHECK_THROWS_AS(flex_crop_set(std::vector<double>(10, 1.0), 2, 2, 0.5), ShapeMismatch);
}

TEST_CASE("flex crop sets report uncovered pixels") {
    // every map points at pixel (0, 0)
    std::vector<double> maps(4 * 4, 0.0);
    for (std::size_t p = 0; p < 4; ++p) maps[p * 4] = 1.0;
    CHECK_THROWS_AS(flex_crop_set(maps, 2, 2, 0.5), UncoveredPixel);
}

TEST_CASE("gather and scatter") {
    const ImageShape shape{4, 4, 2};
    const auto img = testing::random_vector(shape.size(), 3);
    const auto full = full_crop(4, 4);
    CHECK(gather(full, img, shape) == img);

    const auto crop = square_crop(4, 4, 1, 1, 2);
    const auto v = testing::random_vector(crop.flat_size(2), 4);
    std::vector<double> acc(shape.size(), 0.0);
    scatter_add(crop, v, shape, acc);
    CHECK(gather(crop, acc, shape) == v);

    // C^T C masks the image to the crop
    std::vector<double> masked(shape.size(), 0.0);
    scatter_add(crop, gather(crop, img, shape), shape, masked);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 4; ++c)
            for (std::size_t ch = 0; ch < 2; ++ch) {
                const bool in = r >= 1 && r <= 2 && c >= 1 && c <= 2;
                CHECK(masked[shape.index(r, c, ch)] == (in ? img[shape.index(r, c, ch)] : 0.0));
            }

    CHECK_THROWS_AS(gather(crop, std::vector<double>(5, 0.0), shape), ShapeMismatch);
    std::vector<double> wrong(3, 0.0);
    CHECK_THROWS_AS(scatter_add(crop, wrong, shape, acc), ShapeMismatch);
}

TEST_CASE("overlapping scatter-adds match dense 0/1 matrices") {
    const ImageShape shape{4, 4, 1};
    const auto a = square_crop(4, 4, 0, 0, 3);
    const auto b = square_crop(4, 4, 1, 1, 3);
    const auto va = testing::random_vector(9, 5);
    const auto vb = testing::random_vector(9, 6);
    std::vector<double> acc(16, 0.0);
    scatter_add(a, va, shape, acc);
    scatter_add(b, vb, shape, acc);

    auto matrix = [](const CropSpec& crop) {
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(9, 16);
        for (std::size_t k = 0; k < crop.pixels.size(); ++k) M(k, crop.pixels[k].row * 4 + crop.pixels[k].col) = 1;
        return M;
    };
    const Eigen::VectorXd dense = matrix(a).transpose() * Eigen::Map<const Eigen::VectorXd>(va.data(), 9) +
                                  matrix(b).transpose() * Eigen::Map<const Eigen::VectorXd>(vb.data(), 9);
    for (int i = 0; i < 16; ++i) CHECK(acc[i] == doctest::Approx(dense(i)).epsilon(1e-15));
}

TEST_CASE("patch sets round trip through files") {
    ScratchDir dir;
    const auto blobs = synthetic_blob_maps(6, 6, 1.0);
    const auto set = flex_crop_set(blobs.values, 6, 6, 0.6);
    save_patch_set(dir / "flex.tensor", set, {"flex", 0.6, 0.5});
    PatchSetMeta meta;
    const auto back = load_patch_set(dir / "flex.tensor", &meta);
    CHECK(back.crops() == set.crops());
    CHECK(back.coverage() == set.coverage());
    CHECK(meta.kind == "flex");
    CHECK(meta.parameter == 0.6);
    CHECK(meta.t == 0.5);
}
