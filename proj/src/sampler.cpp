#include "pspc/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "pspc/csv.hpp"
#include "pspc/errors.hpp"
#include "pspc/parallel.hpp"

namespace pspc {

namespace fs = std::filesystem;

Solver parse_solver(const std::string& name) {
    if (name == "euler") return Solver::euler;
    if (name == "heun") return Solver::heun;
    throw ConfigError("unknown solver '" + name + "' (expected euler or heun)");
}

std::string to_string(Solver solver) { return solver == Solver::euler ? "euler" : "heun"; }

std::vector<double> pf_ode_rhs(const Denoiser& denoiser, std::span<const double> z, double t) {
    detail::require_positive_time(t, "pf_ode_rhs");
    const Image x_hat = denoiser.denoise(z, t);
    std::vector<double> rhs(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) rhs[i] = (z[i] - x_hat[i]) / t;
    return rhs;
}

Trajectory integrate_pf_ode(const Denoiser& denoiser, std::span<const double> ts, std::span<const double> z_init,
                            Solver solver, bool capture) {
    if (ts.size() < 2) throw ConfigError("integration needs at least two times");
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const bool last = i + 1 == ts.size();
        if (!std::isfinite(ts[i]) || ts[i] < 0.0 || (ts[i] == 0.0 && !last)) {
            throw ConfigError("integration times must be positive, with 0 allowed only at the end");
        }
        if (!last && !(ts[i] > ts[i + 1])) throw ConfigError("integration times must be strictly decreasing");
    }
    const std::size_t d = denoiser.shape().size();
    if (z_init.size() != d) throw ShapeMismatch("initial state does not match the denoiser's image shape");

    Trajectory tr;
    tr.solver = solver;
    tr.times.assign(ts.begin(), ts.end());
    std::vector<double> z(z_init.begin(), z_init.end());
    std::vector<double> rhs(d), z_pred(d);

    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        const double t = ts[k];
        const double tn = ts[k + 1];
        const double h = tn - t;
        const Image x_hat = denoiser.denoise(z, t);
        ++tr.denoiser_calls;
        if (capture) {
            tr.z.push_back(z);
            tr.x_hat.push_back(x_hat);
        }
        for (std::size_t i = 0; i < d; ++i) {
            rhs[i] = (z[i] - x_hat[i]) / t;
            z_pred[i] = z[i] + h * rhs[i];
        }
        if (solver == Solver::heun && tn > 0.0) {
            const Image x_pred = denoiser.denoise(z_pred, tn);
            ++tr.denoiser_calls;
            for (std::size_t i = 0; i < d; ++i) {
                const double rhs_pred = (z_pred[i] - x_pred[i]) / tn;
                z[i] = z[i] + h * (0.5 * (rhs[i] + rhs_pred));
            }
        } else {
            z.swap(z_pred);
        }
    }
    if (capture) {
        tr.z.push_back(z);
        if (ts.back() == 0.0) {
            tr.x_hat.push_back(z);
        } else {
            tr.x_hat.push_back(denoiser.denoise(z, ts.back()));
            ++tr.denoiser_calls;
        }
    }
    tr.final_sample = std::move(z);
    return tr;
}

Trajectory sample(const Denoiser& denoiser, const TimeSchedule& schedule, std::span<const double> z_init,
                  Solver solver, bool capture) {
    if (!schedule.terminated()) throw ConfigError("sampling schedule must end at t = 0");
    Trajectory tr = integrate_pf_ode(denoiser, schedule.ts, z_init, solver, capture);
    tr.schedule_id = schedule.id;
    return tr;
}

Trajectory sample_euler(const Denoiser& denoiser, const TimeSchedule& schedule, std::span<const double> z_init,
                        bool capture) {
    return sample(denoiser, schedule, z_init, Solver::euler, capture);
}

Trajectory sample_heun(const Denoiser& denoiser, const TimeSchedule& schedule, std::span<const double> z_init,
                       bool capture) {
    return sample(denoiser, schedule, z_init, Solver::heun, capture);
}

std::vector<double> sample_batch(const Denoiser& denoiser, const TimeSchedule& schedule,
                                 std::span<const double> z_inits, Solver solver) {
    const std::size_t d = denoiser.shape().size();
    if (z_inits.empty() || z_inits.size() % d != 0) throw ShapeMismatch("initial states must be count x dim");
    const std::size_t count = z_inits.size() / d;
    std::vector<double> out(z_inits.size());
    parallel_for(count, [&](std::size_t i) {
        const auto tr = sample(denoiser, schedule, z_inits.subspan(i * d, d), solver, false);
        std::copy(tr.final_sample.begin(), tr.final_sample.end(), out.begin() + static_cast<std::ptrdiff_t>(i * d));
    });
    return out;
}

void save_trajectory(const fs::path& dir, const Trajectory& trajectory, const ImageShape& shape, DType dtype) {
    if (!trajectory.captured()) throw ConfigError("trajectory was not captured");
    fs::create_directories(dir);
    auto stack = [&](const std::vector<Image>& frames) {
        Tensor tensor;
        tensor.dtype = dtype;
        tensor.dims = {frames.size(), shape.height, shape.width, shape.channels};
        for (const auto& f : frames) {
            if (f.size() != shape.size()) throw ShapeMismatch("trajectory frame does not match the image shape");
            tensor.values.insert(tensor.values.end(), f.begin(), f.end());
        }
        return tensor;
    };
    write_tensor_file(dir / "z.tensor", stack(trajectory.z));
    write_tensor_file(dir / "x_hat.tensor", stack(trajectory.x_hat));
    emit_csv(schedule_table(trajectory.times), dir / "times.csv");
}

}  // namespace pspc
