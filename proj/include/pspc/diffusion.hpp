#ifndef PSPC_DIFFUSION_HPP
#define PSPC_DIFFUSION_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pspc/csv.hpp"
#include "pspc/dataset.hpp"

namespace pspc {

/// Variance-exploding process with sigma(t) = t, zero drift and prior N(0, sigma_max^2 I).
struct DiffusionProcess {
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;

    void validate() const;
};

/**
 * Strictly decreasing noise levels. A sampler schedule ends with a
 * trailing 0; evaluation grids may omit it.
 */
struct TimeSchedule {
    std::vector<double> ts;
    std::string id;

    bool terminated() const { return !ts.empty() && ts.back() == 0.0; }
    /// The strictly positive prefix.
    std::span<const double> positive() const;
    void validate() const;
};

/// Karras-style warped grid from sigma_max to sigma_min with a trailing 0.
TimeSchedule edm_schedule(const DiffusionProcess& process, std::size_t n_steps);

/// Geometric grid from t_lo to t_hi, both endpoints exact.
std::vector<double> log_uniform_grid(double t_lo, double t_hi, std::size_t count);

struct ForwardBatch {
    std::vector<double> z;  // count x dim
    std::vector<std::size_t> source;
    std::size_t dim = 0;

    std::size_t size() const { return source.size(); }
    std::span<const double> sample(std::size_t i) const { return {z.data() + i * dim, dim}; }
};

/**
 * Draws z = x_i + t * eps with i uniform over the dataset. Sample k uses
 * the substream (seed, stream, k), so the batch does not depend on the
 * order or thread in which samples are generated.
 */
ForwardBatch sample_forward(const ImageDataset& dataset, double t, std::size_t count, std::uint64_t seed,
                            std::uint64_t stream = 0);

/// Prior draw z = sigma_max * eps, one substream per sample.
std::vector<double> sample_prior(std::size_t dim, double sigma_max, std::size_t count, std::uint64_t seed);

std::vector<double> denoiser_to_score(std::span<const double> x_hat, std::span<const double> z, double t);
std::vector<double> score_to_denoiser(std::span<const double> score, std::span<const double> z, double t);

/// Columns: index, t.
Table schedule_table(std::span<const double> ts);

}  // namespace pspc

#endif
