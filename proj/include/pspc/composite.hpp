#ifndef PSPC_COMPOSITE_HPP
#define PSPC_COMPOSITE_HPP

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pspc/csv.hpp"
#include "pspc/dataset.hpp"
#include "pspc/denoiser.hpp"
#include "pspc/evalset.hpp"
#include "pspc/patch_geometry.hpp"

namespace pspc {

/**
 * Piecewise-constant schedule over t. Knots are stored in decreasing t;
 * a query returns the value of the knot nearest in log t (the larger-t
 * knot on an exact tie).
 */
template <typename Value>
class KnotSchedule {
public:
    KnotSchedule() = default;
    explicit KnotSchedule(std::vector<std::pair<double, Value>> knots);

    static KnotSchedule constant(Value v) { return KnotSchedule({{1.0, v}}); }

    const std::vector<std::pair<double, Value>>& knots() const { return knots_; }
    Value at(double t) const;

    /// Columns: t, value.
    Table to_table() const;
    static KnotSchedule from_table(const Table& table);

private:
    std::vector<std::pair<double, Value>> knots_;
};

using SizeSchedule = KnotSchedule<std::size_t>;
using LambdaSchedule = KnotSchedule<double>;

/**
 * Coverage-normalized sum of patch posterior means over every crop of
 * the set. Crops are evaluated independently and scatter-added in set
 * order, so the result does not depend on the thread count.
 */
Image pspc_denoise(const ImageDataset& dataset, std::span<const double> z, double t, const PatchSet& patch_set,
                   std::optional<std::size_t> top_k = std::nullopt);

/// Patch posterior mean of every crop of the set, in crop order.
std::vector<std::vector<double>> patch_means(const ImageDataset& dataset, std::span<const double> z, double t,
                                             const PatchSet& patch_set,
                                             std::optional<std::size_t> top_k = std::nullopt);

Image pspc_square(const ImageDataset& dataset, std::span<const double> z, double t, const SizeSchedule& schedule,
                  std::optional<std::size_t> top_k = std::nullopt);

/// maps: one heatmap per output pixel for this t, laid out (H, W, H, W).
Image pspc_flex(const ImageDataset& dataset, std::span<const double> z, double t, std::span<const double> maps,
                const LambdaSchedule& schedule, std::optional<std::size_t> top_k = std::nullopt);

/**
 * Mean over crops (equally weighted) of the per-element squared error
 * between each patch posterior mean and the same crop of reference.
 */
double patch_error(const ImageDataset& dataset, std::span<const double> z, double t, const PatchSet& patch_set,
                   std::span<const double> reference, std::optional<std::size_t> top_k = std::nullopt);

enum class TuneObjective { composite, patch_error };

struct TuneResult {
    std::vector<double> t_grid;
    std::vector<double> candidates;
    std::vector<double> mse;  // t_grid.size() x candidates.size()
    std::vector<std::size_t> chosen;  // candidate index per t

    double error(std::size_t t_index, std::size_t candidate) const { return mse[t_index * candidates.size() + candidate]; }
    /// Columns: t, candidate, mse (one row per cell).
    Table error_table() const;
    /// Columns: t, value.
    Table choice_table() const;
};

/**
 * Picks, for each t of the evaluation set, the patch size with the lowest
 * mean squared error against the reference (ties go to the smaller size).
 * The objective is either the PSPC-Square composite or the per-crop patch
 * error. Candidates are evaluated in ascending order.
 */
TuneResult tune_size_schedule(const ImageDataset& dataset, const Denoiser& reference, const EvalSet& evalset,
                              std::vector<std::size_t> sizes, TuneObjective objective = TuneObjective::composite,
                              std::optional<std::size_t> top_k = std::nullopt);

class HeatmapSource;

/// As tune_size_schedule for PSPC-Flex thresholds, ties going to the smaller lambda.
TuneResult tune_lambda_schedule(const ImageDataset& dataset, const Denoiser& reference, const EvalSet& evalset,
                                const HeatmapSource& heatmaps, std::vector<double> lambdas,
                                std::optional<std::size_t> top_k = std::nullopt);

SizeSchedule size_schedule_from(const TuneResult& result);
LambdaSchedule lambda_schedule_from(const TuneResult& result);

/// Odd sizes 1, 3, ... up to min(H, W), plus min(H, W) itself when even.
std::vector<std::size_t> default_size_candidates(const ImageShape& shape);

}  // namespace pspc

#endif
