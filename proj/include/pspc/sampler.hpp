#ifndef PSPC_SAMPLER_HPP
#define PSPC_SAMPLER_HPP

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pspc/dataset.hpp"
#include "pspc/denoiser.hpp"
#include "pspc/diffusion.hpp"
#include "pspc/tensor_file.hpp"

namespace pspc {

enum class Solver { euler, heun };

Solver parse_solver(const std::string& name);
std::string to_string(Solver solver);

/// (z - x_hat) / t
std::vector<double> pf_ode_rhs(const Denoiser& denoiser, std::span<const double> z, double t);

/**
 * times follows the schedule exactly. When captured, z[k] is the state at
 * times[k] and x_hat[k] the denoiser output there; the t = 0 entry holds
 * the final sample in both.
 */
struct Trajectory {
    std::vector<double> times;
    std::vector<Image> z;
    std::vector<Image> x_hat;
    Image final_sample;
    std::size_t denoiser_calls = 0;
    std::string schedule_id;
    Solver solver = Solver::euler;

    bool captured() const { return !z.empty(); }
};

/**
 * Integrates the PF-ODE over a strictly decreasing grid of times, which
 * may end at 0 (the step into 0 is always a plain Euler step). Used
 * directly for partial integrations such as t in [1, 80].
 */
Trajectory integrate_pf_ode(const Denoiser& denoiser, std::span<const double> ts, std::span<const double> z_init,
                            Solver solver, bool capture = false);

/// Full sampling runs; the schedule must end at 0.
Trajectory sample_euler(const Denoiser& denoiser, const TimeSchedule& schedule, std::span<const double> z_init,
                        bool capture = false);
Trajectory sample_heun(const Denoiser& denoiser, const TimeSchedule& schedule, std::span<const double> z_init,
                       bool capture = false);
Trajectory sample(const Denoiser& denoiser, const TimeSchedule& schedule, std::span<const double> z_init,
                  Solver solver, bool capture = false);

/// Final samples of a batch of initial states (count x dim), trajectories run in parallel.
std::vector<double> sample_batch(const Denoiser& denoiser, const TimeSchedule& schedule,
                                 std::span<const double> z_inits, Solver solver);

/// Writes <dir>/z.tensor and <dir>/x_hat.tensor (steps, H, W, C) and <dir>/times.csv.
void save_trajectory(const std::filesystem::path& dir, const Trajectory& trajectory, const ImageShape& shape,
                     DType dtype = DType::f64);

}  // namespace pspc

#endif
