#include "pspc/diffusion.hpp"

#include <cmath>

#include "pspc/errors.hpp"
#include "pspc/parallel.hpp"
#include "pspc/rng.hpp"

namespace pspc {

void DiffusionProcess::validate() const {
    if (!(sigma_min > 0.0 && sigma_min < sigma_max)) {
        throw ConfigError("diffusion process requires 0 < sigma_min < sigma_max");
    }
    if (!(rho > 0.0)) {
        throw ConfigError("diffusion process requires rho > 0");
    }
}

std::span<const double> TimeSchedule::positive() const {
    std::size_t n = ts.size();
    while (n > 0 && ts[n - 1] == 0.0) --n;
    return {ts.data(), n};
}

void TimeSchedule::validate() const {
    auto pos = positive();
    if (pos.empty()) {
        throw ConfigError("time schedule has no positive entries");
    }
    if (ts.size() > pos.size() + 1) {
        throw ConfigError("time schedule may end with at most one 0");
    }
    for (std::size_t i = 0; i < pos.size(); ++i) {
        if (!(pos[i] > 0.0) || (i > 0 && !(pos[i] < pos[i - 1]))) {
            throw ConfigError("time schedule must be positive and strictly decreasing");
        }
    }
}

TimeSchedule edm_schedule(const DiffusionProcess& process, std::size_t n_steps) {
    process.validate();
    if (n_steps < 2) {
        throw ConfigError("edm_schedule needs at least 2 steps");
    }
    const double inv_rho = 1.0 / process.rho;
    const double hi = std::pow(process.sigma_max, inv_rho);
    const double lo = std::pow(process.sigma_min, inv_rho);
    TimeSchedule schedule;
    schedule.ts.resize(n_steps + 1);
    for (std::size_t i = 0; i < n_steps; ++i) {
        const double frac = static_cast<double>(i) / static_cast<double>(n_steps - 1);
        schedule.ts[i] = std::pow(hi + frac * (lo - hi), process.rho);
    }
    schedule.ts.front() = process.sigma_max;
    schedule.ts[n_steps - 1] = process.sigma_min;
    schedule.ts.back() = 0.0;
    schedule.id = "edm(n=" + std::to_string(n_steps) + ",sigma_min=" + format_number(process.sigma_min) +
                  ",sigma_max=" + format_number(process.sigma_max) + ",rho=" + format_number(process.rho) + ")";
    schedule.validate();
    return schedule;
}

std::vector<double> log_uniform_grid(double t_lo, double t_hi, std::size_t count) {
    if (!(t_lo > 0.0 && t_lo < t_hi) || count < 2) {
        throw ConfigError("log_uniform_grid requires 0 < t_lo < t_hi and count >= 2");
    }
    const double a = std::log(t_lo);
    const double b = std::log(t_hi);
    std::vector<double> grid(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double frac = static_cast<double>(i) / static_cast<double>(count - 1);
        grid[i] = std::exp(a + frac * (b - a));
    }
    grid.front() = t_lo;
    grid.back() = t_hi;
    return grid;
}

ForwardBatch sample_forward(const ImageDataset& dataset, double t, std::size_t count, std::uint64_t seed,
                            std::uint64_t stream) {
    detail::require_positive_time(t, "sample_forward");
    ForwardBatch batch;
    batch.dim = dataset.dim();
    batch.z.resize(count * batch.dim);
    batch.source.resize(count);
    parallel_for(count, [&](std::size_t k) {
        Rng rng(seed, stream, k);
        const std::size_t i = rng.uniform_index(dataset.size());
        batch.source[k] = i;
        auto x = dataset.image(i);
        double* z = batch.z.data() + k * batch.dim;
        for (std::size_t j = 0; j < batch.dim; ++j) z[j] = x[j] + t * rng.normal();
    });
    return batch;
}

std::vector<double> sample_prior(std::size_t dim, double sigma_max, std::size_t count, std::uint64_t seed) {
    std::vector<double> z(count * dim);
    parallel_for(count, [&](std::size_t k) {
        Rng rng(seed, 0x707269, k);
        for (std::size_t j = 0; j < dim; ++j) z[k * dim + j] = sigma_max * rng.normal();
    });
    return z;
}

std::vector<double> denoiser_to_score(std::span<const double> x_hat, std::span<const double> z, double t) {
    detail::require_positive_time(t, "denoiser_to_score");
    if (x_hat.size() != z.size()) throw ShapeMismatch("denoiser_to_score: shape mismatch");
    std::vector<double> score(z.size());
    const double t2 = t * t;
    for (std::size_t i = 0; i < z.size(); ++i) score[i] = (x_hat[i] - z[i]) / t2;
    return score;
}

std::vector<double> score_to_denoiser(std::span<const double> score, std::span<const double> z, double t) {
    detail::require_positive_time(t, "score_to_denoiser");
    if (score.size() != z.size()) throw ShapeMismatch("score_to_denoiser: shape mismatch");
    std::vector<double> x_hat(z.size());
    const double t2 = t * t;
    for (std::size_t i = 0; i < z.size(); ++i) x_hat[i] = z[i] + t2 * score[i];
    return x_hat;
}

Table schedule_table(std::span<const double> ts) {
    std::vector<double> index(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) index[i] = static_cast<double>(i);
    Table table;
    table.add("index", std::move(index)).add("t", {ts.begin(), ts.end()});
    return table;
}

}  // namespace pspc
