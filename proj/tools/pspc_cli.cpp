#include <algorithm>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>

#include "pspc/composite.hpp"
#include "pspc/csv.hpp"
#include "pspc/dataset.hpp"
#include "pspc/denoisers.hpp"
#include "pspc/diffusion.hpp"
#include "pspc/errors.hpp"
#include "pspc/eval.hpp"
#include "pspc/evalset.hpp"
#include "pspc/manifest.hpp"
#include "pspc/parallel.hpp"
#include "pspc/sampler.hpp"
#include "pspc/sensitivity.hpp"

namespace fs = std::filesystem;
using namespace pspc;

namespace {

struct Common {
    std::string out;
    std::uint64_t seed = 0;
    int threads = 0;
    DiffusionProcess process;
    std::string dataset;
    std::string normalization = "auto";
    double blob_scale = 2.0;
    double blob_exponent = 0.3;
    bool f32 = false;
};

struct Grid {
    std::string kind = "edm";
    std::size_t steps = 18;
    double t_min = 0.01;
    double t_max = 100.0;
    std::size_t count = 9;
};

void add_common(CLI::App* cmd, Common& c, bool needs_dataset = true) {
    cmd->add_option("--out", c.out, "Output directory")->required();
    cmd->add_option("--seed", c.seed, "Master seed");
    cmd->add_option("--threads", c.threads, "Worker threads (0 = runtime default)");
    cmd->add_option("--sigma-min", c.process.sigma_min, "Smallest noise level of the EDM grid");
    cmd->add_option("--sigma-max", c.process.sigma_max, "Largest noise level and prior scale");
    cmd->add_option("--rho", c.process.rho, "EDM warp exponent");
    cmd->add_option("--blob-scale", c.blob_scale, "Surrogate heatmap width scale");
    cmd->add_option("--blob-exponent", c.blob_exponent, "Surrogate heatmap width exponent in t");
    cmd->add_flag("--f32", c.f32, "Write bulk tensors as 32-bit floats");
    auto* ds = cmd->add_option("--dataset", c.dataset, "Raster directory or (N,H,W,C) tensor file");
    if (needs_dataset) ds->required();
    cmd->add_option("--normalization", c.normalization, "u8, none or auto (u8 for directories)")
        ->check(CLI::IsMember({"auto", "u8", "none"}));
}

void add_grid(CLI::App* cmd, Grid& g) {
    cmd->add_option("--grid", g.kind, "edm or log")->check(CLI::IsMember({"edm", "log"}));
    cmd->add_option("--steps", g.steps, "Points of the EDM grid");
    cmd->add_option("--t-min", g.t_min, "Lower end of a log grid");
    cmd->add_option("--t-max", g.t_max, "Upper end of a log grid");
    cmd->add_option("--count", g.count, "Points of a log grid");
}

DType dtype_of(const Common& c) { return c.f32 ? DType::f32 : DType::f64; }

std::shared_ptr<const ImageDataset> open_dataset(const Common& c) {
    Normalization n = Normalization::none;
    if (c.normalization == "u8" || (c.normalization == "auto" && fs::is_directory(c.dataset))) {
        n = Normalization::u8_to_unit;
    }
    return std::make_shared<const ImageDataset>(load_dataset(c.dataset, n));
}

/// Positive t values in descending order plus an id for the manifest.
std::pair<std::vector<double>, std::string> make_grid(const Grid& g, const DiffusionProcess& process) {
    if (g.kind == "edm") {
        const auto schedule = edm_schedule(process, g.steps);
        const auto pos = schedule.positive();
        return {{pos.begin(), pos.end()}, schedule.id};
    }
    auto ts = log_uniform_grid(g.t_min, g.t_max, g.count);
    std::reverse(ts.begin(), ts.end());
    return {ts, "log(t_min=" + format_number(g.t_min) + ",t_max=" + format_number(g.t_max) +
                    ",count=" + std::to_string(g.count) + ")"};
}

RunManifest base_manifest(const std::string& command, const Common& c, const ImageDataset* ds) {
    RunManifest m;
    m.set("command", command);
    m.set("seed", c.seed);
    m.set("threads", static_cast<std::uint64_t>(num_threads()));
    m.set("sigma_min", c.process.sigma_min);
    m.set("sigma_max", c.process.sigma_max);
    m.set("rho", c.process.rho);
    if (ds) {
        m.set("dataset", c.dataset);
        m.set("dataset_name", ds->name());
        m.set("dataset_hash", ds->hash());
        m.set("dataset_size", static_cast<std::uint64_t>(ds->size()));
        m.set("image_shape", std::to_string(ds->shape().height) + "x" + std::to_string(ds->shape().width) + "x" +
                                 std::to_string(ds->shape().channels));
        m.set("normalization", c.normalization);
    }
    return m;
}

void finish(const Common& c, const RunManifest& m) {
    m.save(fs::path(c.out) / "run.manifest");
    std::cout << "wrote " << c.out << "\n";
}

DenoiserContext context_for(const Common& c, std::shared_ptr<const ImageDataset> ds,
                            std::optional<std::vector<double>> t_grid = std::nullopt) {
    return {std::move(ds), BlobWidth{c.blob_scale, c.blob_exponent}, std::move(t_grid)};
}

/// Concentration of the maps that carry mass; all-zero maps (a collapsed posterior) are listed separately.
void write_concentration(std::span<const SensitivityMap> maps, std::span<const double> fractions, const fs::path& path,
                         RunManifest& m) {
    std::vector<SensitivityMap> live;
    std::string empty;
    for (const auto& map : maps) {
        if (std::any_of(map.values.begin(), map.values.end(), [](double v) { return v > 0.0; }))
            live.push_back(map);
        else
            empty += (empty.empty() ? "" : ",") + format_number(map.t);
    }
    emit_csv(concentration_table(live, fractions), path);
    if (!empty.empty()) m.set("zero_maps_t", empty);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Patch-based empirical denoisers and samplers"};
    app.require_subcommand(1);

    Common c;
    Grid grid;
    std::string evalset_dir, denoiser_spec = "optimal", reference_spec = "optimal", solver_name = "heun";
    std::string maps_path, kind = "square";
    std::vector<std::string> handles;
    std::vector<std::size_t> sizes, geometry;
    std::vector<double> fractions{0.5, 0.75, 0.95}, lambdas{0.0, 0.25, 0.5, 0.75, 1.0}, times;
    std::size_t batch = 256, count = 16, samples = 64;
    bool trajectories = false, finite_difference = false;

    auto* ingest = app.add_subcommand("ingest", "Load a dataset and record its sources and hash");
    add_common(ingest, c);

    auto* fwd = app.add_subcommand("fwd-evalset", "Forward-process evaluation set on a t grid");
    add_common(fwd, c);
    add_grid(fwd, grid);
    fwd->add_option("--batch", batch, "Samples per t");

    auto* denoise = app.add_subcommand("denoise", "Apply a denoiser to every cell of an evaluation set");
    add_common(denoise, c);
    denoise->add_option("--evalset", evalset_dir)->required();
    denoise->add_option("--denoiser", denoiser_spec);

    auto* samp = app.add_subcommand("sample", "Integrate the probability-flow ODE from prior draws");
    add_common(samp, c);
    samp->add_option("--denoiser", denoiser_spec);
    samp->add_option("--solver", solver_name)->check(CLI::IsMember({"euler", "heun"}));
    samp->add_option("--steps", grid.steps, "Points of the EDM grid");
    samp->add_option("--count", count, "Number of samples");
    samp->add_flag("--trajectories", trajectories, "Also write every intermediate state");

    auto* mse = app.add_subcommand("mse-sweep", "Per-t mean squared difference between two denoisers");
    add_common(mse, c);
    mse->add_option("--evalset", evalset_dir)->required();
    mse->add_option("--candidate", denoiser_spec)->required();
    mse->add_option("--reference", reference_spec);

    auto* psweep = app.add_subcommand("patch-sweep", "Per-crop patch error of square crop sizes against a reference");
    add_common(psweep, c);
    psweep->add_option("--evalset", evalset_dir)->required();
    psweep->add_option("--sizes", sizes, "Crop sizes (default: odd sizes up to min(H, W))");
    psweep->add_option("--reference", reference_spec);

    auto* gradmap = app.add_subcommand("gradmap", "Gradient sensitivity maps of a denoiser");
    add_common(gradmap, c);
    add_grid(gradmap, grid);
    gradmap->add_option("--denoiser", denoiser_spec);
    gradmap->add_option("--t", times, "Explicit t values (overrides the grid)");
    gradmap->add_option("--samples", samples, "Forward samples per t");
    gradmap->add_flag("--finite-difference", finite_difference, "Skip closed-form Jacobians");

    auto* conc = app.add_subcommand("concentration", "Mean side length of the centered square holding a mass fraction");
    add_common(conc, c, false);
    add_grid(conc, grid);
    conc->add_option("--maps", maps_path, "Heatmap tensor (H,W,H,W) or (T,H,W,H,W); blobs when omitted");
    conc->add_option("--fractions", fractions);
    conc->add_option("--geometry", geometry, "H W of blob maps when no maps are given")->expected(2);

    auto* tune = app.add_subcommand("tune-schedule", "Choose a crop size or lambda per t");
    add_common(tune, c);
    tune->add_option("--evalset", evalset_dir)->required();
    tune->add_option("--kind", kind)->check(CLI::IsMember({"square", "flex"}));
    tune->add_option("--sizes", sizes);
    tune->add_option("--lambdas", lambdas);
    tune->add_option("--maps", maps_path, "Heatmap tensor for flex tuning; blobs when omitted");
    tune->add_option("--reference", reference_spec);

    auto* cmp = app.add_subcommand("compare-samples", "Sample several denoisers from shared prior draws");
    add_common(cmp, c);
    cmp->add_option("--denoiser", handles, "Denoiser specs (repeatable)")->required();
    cmp->add_option("--steps", grid.steps);
    cmp->add_option("--count", count);

    CLI11_PARSE(app, argc, argv);

    try {
        set_num_threads(c.threads);
        c.process.validate();
        fs::create_directories(c.out);
        const fs::path out(c.out);

        if (*ingest) {
            const auto ds = open_dataset(c);
            write_tensor_file(out / "dataset.tensor", ds->to_tensor(dtype_of(c)));
            auto m = base_manifest("ingest", c, ds.get());
            for (std::size_t i = 0; i < ds->sources().size(); ++i) {
                m.set("source." + std::to_string(i), ds->sources()[i].path + " sha256=" + ds->sources()[i].sha256);
            }
            finish(c, m);
        } else if (*fwd) {
            const auto ds = open_dataset(c);
            const auto [ts, id] = make_grid(grid, c.process);
            save_evalset(out, build_forward_evalset(*ds, ts, batch, c.seed, id), dtype_of(c));
            auto m = base_manifest("fwd-evalset", c, ds.get());
            m.set("schedule_id", id);
            m.set("batch", static_cast<std::uint64_t>(batch));
            finish(c, m);
        } else if (*denoise) {
            const auto ds = open_dataset(c);
            const auto set = load_evalset(evalset_dir);
            const auto d = make_denoiser(denoiser_spec, context_for(c, ds, set.t_grid));
            Tensor result{{set.t_grid.size(), set.batch, set.shape.height, set.shape.width, set.shape.channels},
                          std::vector<double>(set.z.size()), dtype_of(c)};
            const std::size_t dim = set.dim();
            parallel_for(set.t_grid.size() * set.batch, [&](std::size_t cell) {
                const std::size_t ti = cell / set.batch, m = cell % set.batch;
                const auto x = d->denoise_at(set.sample(ti, m), set.t_grid[ti], ti, m);
                std::copy(x.begin(), x.end(), result.values.begin() + static_cast<std::ptrdiff_t>(cell * dim));
            });
            write_tensor_file(out / "x_hat.tensor", result);
            emit_csv(schedule_table(set.t_grid), out / "x_hat.tensor.csv");
            auto m = base_manifest("denoise", c, ds.get());
            m.set("denoiser", d->describe());
            m.set("evalset", evalset_dir);
            m.set("schedule_id", set.schedule_id);
            finish(c, m);
        } else if (*samp) {
            const auto ds = open_dataset(c);
            const auto d = make_denoiser(denoiser_spec, context_for(c, ds));
            const auto schedule = edm_schedule(c.process, grid.steps);
            const Solver solver = parse_solver(solver_name);
            const auto priors = sample_prior(ds->dim(), c.process.sigma_max, count, c.seed);
            const auto finals = sample_batch(*d, schedule, priors, solver);
            const auto& s = ds->shape();
            write_tensor_file(out / "samples.tensor", Tensor{{count, s.height, s.width, s.channels}, finals, dtype_of(c)});
            Table near;
            std::vector<double> idx, dist, which;
            for (std::size_t k = 0; k < count; ++k) {
                const auto [dd, n] = nearest_training_distance(*ds, std::span<const double>(finals).subspan(k * ds->dim(), ds->dim()));
                idx.push_back(static_cast<double>(k));
                dist.push_back(dd);
                which.push_back(static_cast<double>(n));
            }
            near.add("sample", idx).add("distance", dist).add("nearest", which);
            emit_csv(near, out / "nearest.csv");
            if (trajectories) {
                for (std::size_t k = 0; k < count; ++k) {
                    const auto tr = sample(*d, schedule, std::span<const double>(priors).subspan(k * ds->dim(), ds->dim()),
                                           solver, true);
                    save_trajectory(out / ("trajectory_" + std::to_string(k)), tr, s, dtype_of(c));
                }
            }
            auto m = base_manifest("sample", c, ds.get());
            m.set("denoiser", d->describe());
            m.set("solver", to_string(solver));
            m.set("schedule_id", schedule.id);
            m.set("count", static_cast<std::uint64_t>(count));
            finish(c, m);
        } else if (*mse) {
            const auto ds = open_dataset(c);
            const auto set = load_evalset(evalset_dir);
            const auto ctx = context_for(c, ds, set.t_grid);
            const auto cand = make_denoiser(denoiser_spec, ctx);
            const auto ref = make_denoiser(reference_spec, ctx);
            emit_csv(mse_sweep(*cand, *ref, set), out / "mse.csv");
            auto m = base_manifest("mse-sweep", c, ds.get());
            m.set("candidate", cand->describe());
            m.set("reference", ref->describe());
            m.set("evalset", evalset_dir);
            m.set("schedule_id", set.schedule_id);
            finish(c, m);
        } else if (*psweep) {
            const auto ds = open_dataset(c);
            const auto set = load_evalset(evalset_dir);
            const auto ref = make_denoiser(reference_spec, context_for(c, ds, set.t_grid));
            if (sizes.empty()) sizes = default_size_candidates(ds->shape());
            emit_csv(patch_error_sweep(*ds, sizes, *ref, set), out / "patch_error.csv");
            auto m = base_manifest("patch-sweep", c, ds.get());
            m.set("reference", ref->describe());
            m.set("evalset", evalset_dir);
            m.set("schedule_id", set.schedule_id);
            finish(c, m);
        } else if (*gradmap) {
            const auto ds = open_dataset(c);
            const auto d = make_denoiser(denoiser_spec, context_for(c, ds));
            std::string id = "explicit";
            if (times.empty()) std::tie(times, id) = make_grid(grid, c.process);
            SensitivityOptions opts;
            opts.force_finite_difference = finite_difference;
            std::vector<SensitivityMap> maps;
            for (double t : times) maps.push_back(sensitivity_map(*d, *ds, t, samples, c.seed, opts));
            save_maps(out / "maps.tensor", maps, dtype_of(c));
            auto m = base_manifest("gradmap", c, ds.get());
            write_concentration(maps, fractions, out / "concentration.csv", m);
            m.set("denoiser", d->describe());
            m.set("map_source", to_string(maps.front().source));
            m.set("samples", static_cast<std::uint64_t>(samples));
            m.set("schedule_id", id);
            finish(c, m);
        } else if (*conc) {
            std::vector<SensitivityMap> maps;
            std::string source;
            if (!maps_path.empty()) {
                maps = load_external_maps(maps_path);
                source = maps_path;
            } else {
                if (geometry.size() != 2) throw ConfigError("concentration needs --maps or --geometry H W");
                const BlobHeatmaps blobs(geometry[0], geometry[1], BlobWidth{c.blob_scale, c.blob_exponent});
                for (double t : make_grid(grid, c.process).first) maps.push_back(*blobs.maps_for(t));
                source = blobs.describe();
            }
            auto m = base_manifest("concentration", c, nullptr);
            write_concentration(maps, fractions, out / "concentration.csv", m);
            m.set("maps", source);
            m.set("map_source", to_string(maps.front().source));
            finish(c, m);
        } else if (*tune) {
            const auto ds = open_dataset(c);
            const auto set = load_evalset(evalset_dir);
            const auto ref = make_denoiser(reference_spec, context_for(c, ds, set.t_grid));
            TuneResult result;
            std::string maps_desc;
            if (kind == "square") {
                if (sizes.empty()) sizes = default_size_candidates(ds->shape());
                result = tune_size_schedule(*ds, *ref, set, sizes);
            } else {
                std::shared_ptr<const HeatmapSource> source;
                if (!maps_path.empty())
                    source = std::make_shared<HeatmapBank>(load_external_maps(maps_path));
                else
                    source = std::make_shared<BlobHeatmaps>(ds->shape().height, ds->shape().width,
                                                            BlobWidth{c.blob_scale, c.blob_exponent});
                maps_desc = source->describe();
                result = tune_lambda_schedule(*ds, *ref, set, *source, lambdas);
            }
            emit_csv(result.error_table(), out / "errors.csv");
            emit_csv(result.choice_table(), out / "schedule.csv");
            auto m = base_manifest("tune-schedule", c, ds.get());
            m.set("kind", kind);
            m.set("reference", ref->describe());
            m.set("evalset", evalset_dir);
            m.set("schedule_id", set.schedule_id);
            if (!maps_desc.empty()) m.set("maps", maps_desc);
            finish(c, m);
        } else if (*cmp) {
            const auto ds = open_dataset(c);
            const auto ctx = context_for(c, ds);
            std::vector<DenoiserPtr> ds_handles;
            for (const auto& h : handles) ds_handles.push_back(make_denoiser(h, ctx));
            const auto schedule = edm_schedule(c.process, grid.steps);
            const auto priors = sample_prior(ds->dim(), c.process.sigma_max, count, c.seed);
            const auto result = compare_samples(ds_handles, schedule, priors, ds.get());
            save_comparison(out, result, ds->shape(), dtype_of(c));
            auto m = base_manifest("compare-samples", c, ds.get());
            for (std::size_t i = 0; i < ds_handles.size(); ++i) m.set("handle." + std::to_string(i), ds_handles[i]->describe());
            m.set("schedule_id", schedule.id);
            m.set("count", static_cast<std::uint64_t>(count));
            finish(c, m);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
