#ifndef PSPC_EVAL_HPP
#define PSPC_EVAL_HPP

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pspc/csv.hpp"
#include "pspc/dataset.hpp"
#include "pspc/denoiser.hpp"
#include "pspc/diffusion.hpp"
#include "pspc/evalset.hpp"
#include "pspc/sampler.hpp"

namespace pspc {

/// Columns t, mse; mse is the mean over samples, pixels and channels.
Table mse_sweep(const Denoiser& candidate, const Denoiser& reference, const EvalSet& evalset);

/// Columns t, s, mse: per-crop patch error against the reference, crops of C_s weighted equally.
Table patch_error_sweep(const ImageDataset& dataset, std::span<const std::size_t> sizes, const Denoiser& reference,
                        const EvalSet& evalset);

/**
 * Runs the sampler from each initial state and records the states at
 * every positive time of the schedule as a (T, M, H, W, C) evaluation set.
 */
EvalSet build_reverse_evalset(const Denoiser& denoiser, const TimeSchedule& schedule, std::span<const double> z_inits,
                              Solver solver = Solver::heun);

/// Max-abs distance to the nearest training image, and its index.
std::pair<double, std::size_t> nearest_training_distance(const ImageDataset& dataset, std::span<const double> x);

struct SampleComparison {
    std::vector<std::string> names;
    std::vector<std::vector<double>> samples;  // per handle, count x dim
    std::size_t count = 0;
    /// Columns a, b, mse: mean squared difference of final samples per handle pair.
    Table pairs;
    /// Columns handle, sample, distance, nearest.
    Table nearest;
};

/// Heun sampling of every handle from the same initial states.
SampleComparison compare_samples(std::span<const DenoiserPtr> handles, const TimeSchedule& schedule,
                                 std::span<const double> z_inits, const ImageDataset* dataset = nullptr);

/// Writes pairs.csv, nearest.csv (when computed) and samples_<i>.tensor (count, H, W, C).
void save_comparison(const std::filesystem::path& dir, const SampleComparison& comparison, const ImageShape& shape,
                     DType dtype = DType::f64);

}  // namespace pspc

#endif
