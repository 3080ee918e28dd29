#ifndef PSPC_EVALSET_HPP
#define PSPC_EVALSET_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pspc/dataset.hpp"

namespace pspc {

/**
 * Per-t batches of noisy observations, laid out (T, M, H, W, C).
 *
 * source_index holds the clean dataset index for forward-process sets and
 * is empty for sets built from sampler trajectories or external files.
 */
struct EvalSet {
    ImageShape shape;
    std::vector<double> t_grid;
    std::size_t batch = 0;
    std::vector<double> z;
    std::vector<std::size_t> source_index;
    std::string source;       // "forward", "reverse:<denoiser>", "external"
    std::string schedule_id;
    std::uint64_t seed = 0;

    std::size_t dim() const { return shape.size(); }
    std::span<const double> sample(std::size_t t_index, std::size_t m) const {
        return {z.data() + (t_index * batch + m) * dim(), dim()};
    }
    void validate() const;
};

EvalSet build_forward_evalset(const ImageDataset& dataset, std::span<const double> t_grid, std::size_t batch,
                              std::uint64_t seed, std::string schedule_id = "custom");

/// Writes <dir>/z.tensor (T, M, H, W, C), <dir>/t_grid.csv, <dir>/sources.tensor (if any), <dir>/evalset.manifest.
void save_evalset(const std::filesystem::path& dir, const EvalSet& set, DType dtype = DType::f64);
EvalSet load_evalset(const std::filesystem::path& dir);

}  // namespace pspc

#endif
