#include "pspc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pspc/composite.hpp"
#include "pspc/errors.hpp"
#include "pspc/parallel.hpp"

namespace pspc {

namespace fs = std::filesystem;

Table mse_sweep(const Denoiser& candidate, const Denoiser& reference, const EvalSet& evalset) {
    evalset.validate();
    if (!(candidate.shape() == evalset.shape) || !(reference.shape() == evalset.shape)) {
        throw ShapeMismatch("denoiser and evaluation set shapes differ");
    }
    const std::size_t T = evalset.t_grid.size(), M = evalset.batch, d = evalset.dim();
    std::vector<double> cell(T * M);
    parallel_for(T * M, [&](std::size_t idx) {
        const std::size_t ti = idx / M, m = idx % M;
        const double t = evalset.t_grid[ti];
        const auto z = evalset.sample(ti, m);
        const Image a = candidate.denoise_at(z, t, ti, m);
        const Image b = reference.denoise_at(z, t, ti, m);
        double sum = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double diff = a[i] - b[i];
            sum += diff * diff;
        }
        cell[idx] = sum;
    });
    std::vector<double> mse(T);
    for (std::size_t ti = 0; ti < T; ++ti) {
        double sum = 0.0;
        for (std::size_t m = 0; m < M; ++m) sum += cell[ti * M + m];
        mse[ti] = sum / static_cast<double>(M * d);
    }
    Table table;
    table.add("t", evalset.t_grid).add("mse", std::move(mse));
    return table;
}

Table patch_error_sweep(const ImageDataset& dataset, std::span<const std::size_t> sizes, const Denoiser& reference,
                        const EvalSet& evalset) {
    if (sizes.empty()) throw ConfigError("patch error sweep needs at least one size");
    const TuneResult result = tune_size_schedule(dataset, reference, evalset,
                                                 std::vector<std::size_t>(sizes.begin(), sizes.end()),
                                                 TuneObjective::patch_error);
    std::vector<double> ts, ss, mse;
    for (std::size_t ti = 0; ti < result.t_grid.size(); ++ti) {
        for (std::size_t k = 0; k < result.candidates.size(); ++k) {
            ts.push_back(result.t_grid[ti]);
            ss.push_back(result.candidates[k]);
            mse.push_back(result.error(ti, k));
        }
    }
    Table table;
    table.add("t", std::move(ts)).add("s", std::move(ss)).add("mse", std::move(mse));
    return table;
}

EvalSet build_reverse_evalset(const Denoiser& denoiser, const TimeSchedule& schedule, std::span<const double> z_inits,
                              Solver solver) {
    if (!schedule.terminated()) throw ConfigError("sampling schedule must end at t = 0");
    const ImageShape shape = denoiser.shape();
    const std::size_t d = shape.size();
    if (z_inits.empty() || z_inits.size() % d != 0) throw ShapeMismatch("initial states must be count x dim");
    const std::size_t M = z_inits.size() / d;
    const auto positive = schedule.positive();
    const std::size_t T = positive.size();

    EvalSet set;
    set.shape = shape;
    set.t_grid.assign(positive.begin(), positive.end());
    set.batch = M;
    set.source = "reverse:" + denoiser.describe();
    set.schedule_id = schedule.id;
    set.z.assign(T * M * d, 0.0);
    parallel_for(M, [&](std::size_t m) {
        const auto tr = sample(denoiser, schedule, z_inits.subspan(m * d, d), solver, true);
        for (std::size_t ti = 0; ti < T; ++ti) {
            std::copy(tr.z[ti].begin(), tr.z[ti].end(), set.z.begin() + static_cast<std::ptrdiff_t>((ti * M + m) * d));
        }
    });
    return set;
}

std::pair<double, std::size_t> nearest_training_distance(const ImageDataset& dataset, std::span<const double> x) {
    if (x.size() != dataset.dim()) throw ShapeMismatch("sample does not match the dataset image shape");
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_index = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto img = dataset.image(i);
        double dist = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) dist = std::max(dist, std::abs(x[j] - img[j]));
        if (dist < best) {
            best = dist;
            best_index = i;
        }
    }
    return {best, best_index};
}

SampleComparison compare_samples(std::span<const DenoiserPtr> handles, const TimeSchedule& schedule,
                                 std::span<const double> z_inits, const ImageDataset* dataset) {
    if (handles.empty()) throw ConfigError("compare_samples needs at least one denoiser");
    const ImageShape shape = handles.front()->shape();
    for (const auto& h : handles) {
        if (!(h->shape() == shape)) throw ShapeMismatch("compared denoisers must share one image shape");
    }
    const std::size_t d = shape.size();
    if (z_inits.empty() || z_inits.size() % d != 0) throw ShapeMismatch("initial states must be count x dim");

    SampleComparison out;
    out.count = z_inits.size() / d;
    for (const auto& h : handles) {
        out.names.push_back(h->describe());
        out.samples.push_back(sample_batch(*h, schedule, z_inits, Solver::heun));
    }
    std::vector<double> as, bs, mse;
    for (std::size_t a = 0; a < handles.size(); ++a) {
        for (std::size_t b = a + 1; b < handles.size(); ++b) {
            double sum = 0.0;
            for (std::size_t i = 0; i < out.samples[a].size(); ++i) {
                const double diff = out.samples[a][i] - out.samples[b][i];
                sum += diff * diff;
            }
            as.push_back(static_cast<double>(a));
            bs.push_back(static_cast<double>(b));
            mse.push_back(sum / static_cast<double>(out.samples[a].size()));
        }
    }
    out.pairs.add("a", std::move(as)).add("b", std::move(bs)).add("mse", std::move(mse));
    if (dataset) {
        std::vector<double> hs, ms, dist, idx;
        for (std::size_t h = 0; h < handles.size(); ++h) {
            for (std::size_t m = 0; m < out.count; ++m) {
                const auto [distance, index] =
                    nearest_training_distance(*dataset, std::span<const double>(out.samples[h]).subspan(m * d, d));
                hs.push_back(static_cast<double>(h));
                ms.push_back(static_cast<double>(m));
                dist.push_back(distance);
                idx.push_back(static_cast<double>(index));
            }
        }
        out.nearest.add("handle", std::move(hs)).add("sample", std::move(ms)).add("distance", std::move(dist))
            .add("nearest", std::move(idx));
    }
    return out;
}

void save_comparison(const fs::path& dir, const SampleComparison& comparison, const ImageShape& shape, DType dtype) {
    fs::create_directories(dir);
    emit_csv(comparison.pairs, dir / "pairs.csv");
    if (!comparison.nearest.columns.empty()) emit_csv(comparison.nearest, dir / "nearest.csv");
    for (std::size_t h = 0; h < comparison.samples.size(); ++h) {
        Tensor tensor;
        tensor.dtype = dtype;
        tensor.dims = {comparison.count, shape.height, shape.width, shape.channels};
        tensor.values = comparison.samples[h];
        write_tensor_file(dir / ("samples_" + std::to_string(h) + ".tensor"), tensor);
    }
}

}  // namespace pspc
