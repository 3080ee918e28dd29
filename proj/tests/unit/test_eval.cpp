#include <doctest.h>

#include <fstream>
#include <iterator>

#include "pspc/denoisers.hpp"
#include "pspc/diffusion.hpp"
#include "pspc/empirical.hpp"
#include "pspc/errors.hpp"
#include "pspc/eval.hpp"
#include "scratch.hpp"
#include "support.hpp"

using namespace pspc;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("forward evaluation sets") {
    const auto single = testing::random_dataset({3, 3, 1}, 1, 1);
    const std::vector<double> tiny{1e-12};
    const auto set = build_forward_evalset(*single, tiny, 1, 5);
    CHECK(testing::max_abs_diff(set.sample(0, 0), single->image(0)) < 1e-9);
    CHECK_THROWS_AS(build_forward_evalset(*single, tiny, 0, 5), ConfigError);
    const std::vector<double> bad{0.0};
    CHECK_THROWS_AS(build_forward_evalset(*single, bad, 1, 5), DomainError);

    const auto ds = testing::random_dataset({2, 2, 1}, 3, 2);
    const std::vector<double> grid{0.5, 2.0};
    ScratchDir a, b;
    save_evalset(a.path(), build_forward_evalset(*ds, grid, 6, 9));
    save_evalset(b.path(), build_forward_evalset(*ds, grid, 6, 9));
    for (const char* f : {"z.tensor", "sources.tensor", "t_grid.csv", "evalset.manifest"}) {
        CHECK(slurp(a / f) == slurp(b / f));
    }
    const auto back = load_evalset(a.path());
    const auto fresh = build_forward_evalset(*ds, grid, 6, 9);
    CHECK(testing::bitwise_equal(back.z, fresh.z));
    CHECK(back.source_index == fresh.source_index);
    CHECK(back.t_grid == grid);
    CHECK(back.seed == 9);
}

TEST_CASE("forward evaluation set noise has variance t^2") {
    const auto ds = testing::random_dataset({2, 2, 1}, 4, 3);
    const std::vector<double> grid{0.3};
    const std::size_t M = 10000;
    const auto set = build_forward_evalset(*ds, grid, M, 17);
    for (std::size_t j = 0; j < 4; ++j) {
        double var = 0.0;
        for (std::size_t m = 0; m < M; ++m) {
            const double e = set.sample(0, m)[j] - ds->image(set.source_index[m])[j];
            var += e * e;
        }
        var /= static_cast<double>(M);
        CHECK(std::abs(var - 0.09) < 0.05 * 0.09);
    }
}

TEST_CASE("mse sweeps") {
    const auto ds = testing::random_dataset({4, 4, 1}, 5, 6);
    const auto grid = log_uniform_grid(0.05, 20.0, 4);
    const auto set = build_forward_evalset(*ds, grid, 8, 7);
    OptimalDenoiser opt(ds);
    GaussianDenoiser gauss(ds);

    const auto self = mse_sweep(opt, opt, set);
    for (double v : self.column("mse")) CHECK(v == 0.0);

    ConstantDenoiser zero(ds->shape(), 0.0), one(ds->shape(), 1.0);
    const auto gap = mse_sweep(zero, one, set);
    for (double v : gap.column("mse")) CHECK(v == 1.0);

    const auto ab = mse_sweep(opt, gauss, set);
    const auto ba = mse_sweep(gauss, opt, set);
    CHECK(testing::bitwise_equal(ab.column("mse"), ba.column("mse")));
    CHECK(ab.column("t") == grid);

    SquareDenoiser full(ds, SizeSchedule::constant(4));
    const auto same = mse_sweep(full, opt, set);
    for (double v : same.column("mse")) CHECK(v < 1e-20);
}

TEST_CASE("patch error sweeps") {
    const auto ds = testing::lattice_dataset(8, 4, 11);
    OptimalDenoiser opt(ds);
    const std::vector<double> grid{1e-3, 1e4};
    const auto set = build_forward_evalset(*ds, grid, 6, 12);
    const std::vector<std::size_t> sizes{1, 2, 3, 4};
    const auto table = patch_error_sweep(*ds, sizes, opt, set);
    REQUIRE(table.rows() == 8);
    const auto& mse = table.column("mse");
    const auto& s = table.column("s");
    for (std::size_t r = 0; r < 8; ++r) {
        if (s[r] == 4.0) CHECK(mse[r] == 0.0);
        if (table.column("t")[r] == 1e-3) CHECK(mse[r] < 1e-12);
        else CHECK(mse[r] < 1e-6);
    }

    // the full-size crop agrees with the global mse sweep
    SquareDenoiser full(ds, SizeSchedule::constant(4));
    const auto sweep = mse_sweep(full, opt, set);
    CHECK(mse[3] == sweep.column("mse")[0]);
}

TEST_CASE("external denoisers") {
    const auto ds = testing::random_dataset({2, 2, 1}, 3, 13);
    const std::vector<double> grid{0.5, 2.0};
    const auto set = build_forward_evalset(*ds, grid, 3, 14);
    OptimalDenoiser opt(ds);

    Tensor dump{{2, 3, 2, 2, 1}, {}, DType::f64};
    for (std::size_t ti = 0; ti < 2; ++ti)
        for (std::size_t m = 0; m < 3; ++m) {
            const auto x = opt.denoise(set.sample(ti, m), grid[ti]);
            dump.values.insert(dump.values.end(), x.begin(), x.end());
        }
    ScratchDir dir;
    write_tensor_file(dir / "out.tensor", dump);
    Table t_grid;
    t_grid.add("index", {0, 1}).add("t", grid);
    emit_csv(t_grid, dir.path().string() + "/out.tensor.csv");

    const auto ext = load_external_denoiser(dir / "out.tensor");
    const auto replay = mse_sweep(*ext, opt, set);
    for (double v : replay.column("mse")) CHECK(v == 0.0);
    CHECK_THROWS_AS(ext->denoise(set.sample(0, 0), 0.5), MissingData);
    CHECK_THROWS_AS(ext->denoise_at(set.sample(0, 0), 0.7, 0, 0), MissingData);

    const auto bigger = build_forward_evalset(*ds, grid, 4, 14);
    try {
        mse_sweep(*ext, opt, bigger);
        FAIL("expected MissingData");
    } catch (const MissingData& e) {
        CHECK(std::string(e.what()).find("index=3") != std::string::npos);
    }

    dump.values[13] = std::nan("");  // t index 1, sample 0, pixel 1
    const ExternalDenoiser holes(dump, grid);
    CHECK_THROWS_AS(holes.denoise_at(set.sample(1, 0), 2.0, 1, 0), MissingData);
    CHECK_THROWS_AS(ExternalDenoiser(dump, std::vector<double>{0.5}), ShapeMismatch);
}

TEST_CASE("reverse evaluation sets") {
    const auto ds = testing::random_dataset({2, 2, 1}, 3, 15);
    OptimalDenoiser opt(ds);
    const auto schedule = edm_schedule(DiffusionProcess{}, 6);
    const auto priors = sample_prior(4, 80.0, 3, 16);
    const auto set = build_reverse_evalset(opt, schedule, priors);
    CHECK(set.t_grid.size() == 6);
    CHECK(set.batch == 3);
    CHECK(set.source == "reverse:optimal");
    const auto tr = sample_heun(opt, schedule, std::span<const double>(priors).subspan(4, 4), true);
    for (std::size_t ti = 0; ti < 6; ++ti) CHECK(testing::bitwise_equal(set.sample(ti, 1), tr.z[ti]));
}

TEST_CASE("sample comparisons") {
    const auto ds = testing::lattice_dataset(6, 4, 20);
    auto opt = std::make_shared<OptimalDenoiser>(ds);
    auto full = std::make_shared<SquareDenoiser>(ds, SizeSchedule::constant(4));
    const std::vector<DenoiserPtr> handles{opt, opt, full};
    const auto schedule = edm_schedule(DiffusionProcess{}, 18);
    const auto priors = sample_prior(ds->dim(), 80.0, 5, 21);
    const auto cmp = compare_samples(handles, schedule, priors, ds.get());
    REQUIRE(cmp.pairs.rows() == 3);
    CHECK(cmp.pairs.column("mse")[0] == 0.0);
    CHECK(cmp.pairs.column("mse")[1] < 1e-18);
    for (std::size_t r = 0; r < cmp.nearest.rows(); ++r) CHECK(cmp.nearest.column("distance")[r] < 0.05);

    ScratchDir dir;
    save_comparison(dir.path(), cmp, ds->shape());
    CHECK(read_tensor_file(dir / "samples_2.tensor").dims == std::vector<std::uint64_t>{5, 4, 4, 3});
    CHECK(read_csv(dir / "pairs.csv").rows() == 3);
}

TEST_CASE("denoiser spec strings") {
    const auto ds = testing::random_dataset({4, 4, 1}, 3, 30);
    DenoiserContext ctx{ds, {}, std::nullopt};
    CHECK(make_denoiser("optimal", ctx)->kind() == "optimal");
    CHECK(make_denoiser("optimal:2", ctx)->describe() == "optimal(k=2)");
    CHECK(make_denoiser("gaussian", ctx)->kind() == "gaussian");
    CHECK(make_denoiser("patch:3", ctx)->describe() == "patch(s=3)");
    CHECK(make_denoiser("pspc-square:2", ctx)->kind() == "pspc-square");
    CHECK(make_denoiser("pspc-flex:0.5", ctx)->kind() == "pspc-flex");
    CHECK(make_denoiser("constant:0.25", ctx)->denoise(std::vector<double>(16, 0.0), 1.0)[3] == 0.25);
    CHECK_THROWS_AS(make_denoiser("nonsense", ctx), ConfigError);
    CHECK_THROWS_AS(make_denoiser("patch:9", ctx), ConfigError);
    CHECK_THROWS_AS(make_denoiser("optimal:x", ctx), ConfigError);
    CHECK_THROWS_AS(make_denoiser("optimal", DenoiserContext{}), ConfigError);

    ScratchDir dir;
    emit_csv(SizeSchedule({{10.0, 4}, {0.1, 1}}).to_table(), dir / "s.csv");
    const auto sq = make_denoiser("pspc-square:" + (dir / "s.csv").string(), ctx);
    const auto z = testing::random_vector(16, 31, 0.5);
    CHECK(testing::bitwise_equal(sq->denoise(z, 20.0), optimal_denoise(*ds, z, 20.0)));
}
