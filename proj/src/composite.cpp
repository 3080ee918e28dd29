#include "pspc/composite.hpp"

#include <algorithm>
#include <limits>
#include <optional>

#include "pspc/empirical.hpp"
#include "pspc/errors.hpp"
#include "pspc/parallel.hpp"
#include "pspc/sensitivity.hpp"

namespace pspc {

template <typename Value>
KnotSchedule<Value>::KnotSchedule(std::vector<std::pair<double, Value>> knots) : knots_(std::move(knots)) {
    if (knots_.empty()) throw ConfigError("schedule needs at least one knot");
    std::sort(knots_.begin(), knots_.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; i < knots_.size(); ++i) {
        const auto& [t, v] = knots_[i];
        if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("schedule knot times must be positive");
        if (i > 0 && !(t < knots_[i - 1].first)) throw ConfigError("schedule knot times must be distinct");
        if constexpr (std::is_same_v<Value, double>) {
            if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("lambda schedule values must lie in [0, 1]");
        } else {
            if (v < 1) throw ConfigError("size schedule values must be >= 1");
        }
    }
}

template <typename Value>
Value KnotSchedule<Value>::at(double t) const {
    detail::require_positive_time(t, "schedule lookup");
    if (knots_.empty()) throw ConfigError("schedule has no knots");
    const double lt = std::log(t);
    std::size_t best = 0;
    double best_distance = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < knots_.size(); ++i) {
        const double distance = std::abs(lt - std::log(knots_[i].first));
        if (distance < best_distance) {
            best_distance = distance;
            best = i;
        }
    }
    return knots_[best].second;
}

template <typename Value>
Table KnotSchedule<Value>::to_table() const {
    std::vector<double> ts, values;
    for (const auto& [t, v] : knots_) {
        ts.push_back(t);
        values.push_back(static_cast<double>(v));
    }
    Table table;
    table.add("t", std::move(ts)).add("value", std::move(values));
    return table;
}

template <typename Value>
KnotSchedule<Value> KnotSchedule<Value>::from_table(const Table& table) {
    const auto& ts = table.column("t");
    const auto& values = table.column("value");
    std::vector<std::pair<double, Value>> knots;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if constexpr (std::is_same_v<Value, double>) {
            knots.emplace_back(ts[i], values[i]);
        } else {
            if (values[i] < 1.0 || values[i] != std::floor(values[i])) {
                throw ConfigError("size schedule values must be positive integers");
            }
            knots.emplace_back(ts[i], static_cast<Value>(values[i]));
        }
    }
    return KnotSchedule(std::move(knots));
}

template class KnotSchedule<std::size_t>;
template class KnotSchedule<double>;

namespace {

void check_geometry(const ImageDataset& dataset, const PatchSet& patch_set, std::span<const double> z) {
    if (patch_set.height() != dataset.shape().height || patch_set.width() != dataset.shape().width) {
        throw ShapeMismatch("patch set geometry does not match the dataset images");
    }
    if (z.size() != dataset.dim()) {
        throw ShapeMismatch("observation does not match the dataset image shape");
    }
}

}  // namespace

std::vector<std::vector<double>> patch_means(const ImageDataset& dataset, std::span<const double> z, double t,
                                             const PatchSet& patch_set, std::optional<std::size_t> top_k) {
    detail::require_positive_time(t, "patch_means");
    check_geometry(dataset, patch_set, z);
    const PixelDistanceTable table(dataset, z);
    const std::size_t channels = dataset.shape().channels;
    std::vector<std::vector<double>> means(patch_set.size());
    parallel_for(patch_set.size(), [&](std::size_t i) {
        const auto& crop = patch_set.crops()[i];
        const auto weights = weights_from_distances(table.crop_distances(crop), t, top_k);
        means[i].resize(crop.flat_size(channels));
        weighted_patch_mean(dataset, crop, weights, means[i]);
    });
    return means;
}

Image pspc_denoise(const ImageDataset& dataset, std::span<const double> z, double t, const PatchSet& patch_set,
                   std::optional<std::size_t> top_k) {
    detail::require_positive_time(t, "pspc_denoise");
    check_geometry(dataset, patch_set, z);
    patch_set.require_full_coverage();
    const auto means = patch_means(dataset, z, t, patch_set, top_k);
    const auto& shape = dataset.shape();
    // Each pixel is averaged as first + sum(others - first) / count, in crop
    // order, so crops that agree reproduce their common value exactly.
    const std::size_t channels = shape.channels;
    Image first(dataset.dim(), 0.0), spread(dataset.dim(), 0.0);
    std::vector<char> seen(shape.pixels(), 0);
    for (std::size_t i = 0; i < patch_set.size(); ++i) {
        const auto& crop = patch_set.crops()[i];
        std::size_t m = 0;
        for (const auto& px : crop.pixels) {
            const std::size_t p = px.row * shape.width + px.col;
            double* f = first.data() + p * channels;
            double* s = spread.data() + p * channels;
            if (!seen[p]) {
                for (std::size_t c = 0; c < channels; ++c, ++m) f[c] = means[i][m];
                seen[p] = 1;
            } else {
                for (std::size_t c = 0; c < channels; ++c, ++m) s[c] += means[i][m] - f[c];
            }
        }
    }
    const auto& coverage = patch_set.coverage();
    Image out(dataset.dim());
    for (std::size_t p = 0; p < shape.pixels(); ++p) {
        const double count = static_cast<double>(coverage[p]);
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t j = p * channels + c;
            out[j] = first[j] + spread[j] / count;
        }
    }
    return out;
}

Image pspc_square(const ImageDataset& dataset, std::span<const double> z, double t, const SizeSchedule& schedule,
                  std::optional<std::size_t> top_k) {
    const auto& shape = dataset.shape();
    return pspc_denoise(dataset, z, t, square_crop_set(shape.height, shape.width, schedule.at(t)), top_k);
}

Image pspc_flex(const ImageDataset& dataset, std::span<const double> z, double t, std::span<const double> maps,
                const LambdaSchedule& schedule, std::optional<std::size_t> top_k) {
    const auto& shape = dataset.shape();
    return pspc_denoise(dataset, z, t, flex_crop_set(maps, shape.height, shape.width, schedule.at(t)), top_k);
}

double patch_error(const ImageDataset& dataset, std::span<const double> z, double t, const PatchSet& patch_set,
                   std::span<const double> reference, std::optional<std::size_t> top_k) {
    if (reference.size() != dataset.dim()) throw ShapeMismatch("reference output does not match the image shape");
    if (patch_set.size() == 0) throw ConfigError("patch error over an empty patch set");
    const auto means = patch_means(dataset, z, t, patch_set, top_k);
    const auto& shape = dataset.shape();
    double total = 0.0;
    std::vector<double> target;
    for (std::size_t i = 0; i < patch_set.size(); ++i) {
        target = gather(patch_set.crops()[i], reference, shape);
        double sq = 0.0;
        for (std::size_t k = 0; k < target.size(); ++k) {
            const double diff = means[i][k] - target[k];
            sq += diff * diff;
        }
        total += sq / static_cast<double>(target.size());
    }
    return total / static_cast<double>(patch_set.size());
}

Table TuneResult::error_table() const {
    std::vector<double> ts, cs, errors;
    for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
        for (std::size_t k = 0; k < candidates.size(); ++k) {
            ts.push_back(t_grid[ti]);
            cs.push_back(candidates[k]);
            errors.push_back(error(ti, k));
        }
    }
    Table table;
    table.add("t", std::move(ts)).add("candidate", std::move(cs)).add("mse", std::move(errors));
    return table;
}

Table TuneResult::choice_table() const {
    std::vector<double> values;
    for (auto k : chosen) values.push_back(candidates[k]);
    Table table;
    table.add("t", t_grid).add("value", std::move(values));
    return table;
}

namespace {

double mean_squared(std::span<const double> a, std::span<const double> b) {
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        sq += diff * diff;
    }
    return sq / static_cast<double>(a.size());
}

// Fills result.mse and result.chosen; cell(ti, m, reference, errors) writes one error per candidate.
template <typename Cell>
void run_tuning(TuneResult& result, const Denoiser& reference, const EvalSet& evalset, Cell&& cell) {
    const std::size_t T = evalset.t_grid.size();
    const std::size_t M = evalset.batch;
    const std::size_t K = result.candidates.size();
    result.t_grid = evalset.t_grid;
    result.mse.assign(T * K, 0.0);
    result.chosen.assign(T, 0);
    std::vector<double> errors(T * M * K);
    parallel_for(T * M, [&](std::size_t cell_index) {
        const std::size_t ti = cell_index / M;
        const std::size_t m = cell_index % M;
        const auto z = evalset.sample(ti, m);
        const Image ref = reference.denoise_at(z, evalset.t_grid[ti], ti, m);
        cell(ti, z, ref, std::span<double>(errors.data() + cell_index * K, K));
    });
    for (std::size_t ti = 0; ti < T; ++ti) {
        for (std::size_t k = 0; k < K; ++k) {
            double sum = 0.0;
            for (std::size_t m = 0; m < M; ++m) sum += errors[(ti * M + m) * K + k];
            result.mse[ti * K + k] = sum / static_cast<double>(M);
        }
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k) {
            if (result.mse[ti * K + k] < result.mse[ti * K + best]) best = k;
        }
        result.chosen[ti] = best;
    }
}

}  // namespace

TuneResult tune_size_schedule(const ImageDataset& dataset, const Denoiser& reference, const EvalSet& evalset,
                              std::vector<std::size_t> sizes, TuneObjective objective,
                              std::optional<std::size_t> top_k) {
    if (sizes.empty()) throw ConfigError("tune_size_schedule needs at least one candidate size");
    evalset.validate();
    if (!(evalset.shape == dataset.shape())) throw ShapeMismatch("evaluation set does not match the dataset");
    std::sort(sizes.begin(), sizes.end());
    sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
    const auto& shape = dataset.shape();
    std::vector<PatchSet> sets;
    for (auto s : sizes) sets.push_back(square_crop_set(shape.height, shape.width, s));

    TuneResult result;
    result.candidates.assign(sizes.begin(), sizes.end());
    run_tuning(result, reference, evalset,
               [&](std::size_t ti, std::span<const double> z, const Image& ref, std::span<double> out) {
                   const double t = evalset.t_grid[ti];
                   for (std::size_t k = 0; k < sets.size(); ++k) {
                       if (objective == TuneObjective::composite) {
                           out[k] = mean_squared(pspc_denoise(dataset, z, t, sets[k], top_k), ref);
                       } else {
                           out[k] = patch_error(dataset, z, t, sets[k], ref, top_k);
                       }
                   }
               });
    return result;
}

TuneResult tune_lambda_schedule(const ImageDataset& dataset, const Denoiser& reference, const EvalSet& evalset,
                                const HeatmapSource& heatmaps, std::vector<double> lambdas,
                                std::optional<std::size_t> top_k) {
    if (lambdas.empty()) throw ConfigError("tune_lambda_schedule needs at least one candidate lambda");
    evalset.validate();
    if (!(evalset.shape == dataset.shape())) throw ShapeMismatch("evaluation set does not match the dataset");
    std::sort(lambdas.begin(), lambdas.end());
    lambdas.erase(std::unique(lambdas.begin(), lambdas.end()), lambdas.end());
    const auto& shape = dataset.shape();

    // Patch sets depend only on (t, lambda); build them once per grid point.
    // A lambda whose crops leave a pixel uncovered (or whose maps carry no
    // mass) is infeasible at that t and scores +inf.
    const std::size_t K = lambdas.size();
    std::vector<std::optional<PatchSet>> sets(evalset.t_grid.size() * K);
    for (std::size_t ti = 0; ti < evalset.t_grid.size(); ++ti) {
        const auto maps = heatmaps.maps_for(evalset.t_grid[ti]);
        bool any = false;
        for (std::size_t k = 0; k < K; ++k) {
            try {
                PatchSet set = flex_crop_set(maps->values, shape.height, shape.width, lambdas[k]);
                set.require_full_coverage();
                sets[ti * K + k] = std::move(set);
                any = true;
            } catch (const UncoveredPixel&) {
            } catch (const DegenerateHeatmap&) {
            }
        }
        if (!any) {
            throw UncoveredPixel("no candidate lambda covers every pixel at t=" + format_number(evalset.t_grid[ti]) +
                                 " with heatmaps from " + heatmaps.describe());
        }
    }

    TuneResult result;
    result.candidates = lambdas;
    run_tuning(result, reference, evalset,
               [&](std::size_t ti, std::span<const double> z, const Image& ref, std::span<double> out) {
                   for (std::size_t k = 0; k < K; ++k) {
                       const auto& set = sets[ti * K + k];
                       out[k] = set ? mean_squared(pspc_denoise(dataset, z, evalset.t_grid[ti], *set, top_k), ref)
                                    : std::numeric_limits<double>::infinity();
                   }
               });
    return result;
}

SizeSchedule size_schedule_from(const TuneResult& result) {
    std::vector<std::pair<double, std::size_t>> knots;
    for (std::size_t ti = 0; ti < result.t_grid.size(); ++ti) {
        knots.emplace_back(result.t_grid[ti], static_cast<std::size_t>(result.candidates[result.chosen[ti]]));
    }
    return SizeSchedule(std::move(knots));
}

LambdaSchedule lambda_schedule_from(const TuneResult& result) {
    std::vector<std::pair<double, double>> knots;
    for (std::size_t ti = 0; ti < result.t_grid.size(); ++ti) {
        knots.emplace_back(result.t_grid[ti], result.candidates[result.chosen[ti]]);
    }
    return LambdaSchedule(std::move(knots));
}

std::vector<std::size_t> default_size_candidates(const ImageShape& shape) {
    const std::size_t limit = std::min(shape.height, shape.width);
    std::vector<std::size_t> sizes;
    for (std::size_t s = 1; s <= limit; s += 2) sizes.push_back(s);
    if (sizes.back() != limit) sizes.push_back(limit);
    return sizes;
}

}  // namespace pspc
