#ifndef PSPC_DENOISER_HPP
#define PSPC_DENOISER_HPP

#include <cstddef>
#include <memory>
#include <span>
#include <string>

#include "pspc/dataset.hpp"

namespace pspc {

/// A denoiser linearized at one (z, t): its output and Jacobian columns d out / d z_j.
class JacobianProbe {
public:
    virtual ~JacobianProbe() = default;
    virtual const Image& output() const = 0;
    virtual void column(std::size_t j, std::span<double> out) const = 0;
    virtual bool analytic() const = 0;
};

/**
 * Uniform (z, t) -> x_hat interface shared by the empirical denoisers,
 * the composites, the Gaussian baseline and file-backed outputs.
 */
class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual std::string kind() const = 0;
    /// Kind plus parameters, recorded in run manifests.
    virtual std::string describe() const { return kind(); }
    virtual const ImageShape& shape() const = 0;

    virtual Image denoise(std::span<const double> z, double t) const = 0;

    /// Evaluation at a cell (t_index, sample) of an evaluation grid. File-backed denoisers are only defined there.
    virtual Image denoise_at(std::span<const double> z, double t, std::size_t t_index, std::size_t sample) const;

    /// Central finite differences unless a subclass knows its Jacobian in closed form.
    virtual std::unique_ptr<JacobianProbe> linearize(std::span<const double> z, double t,
                                                     double fd_step = 1e-4) const;

    std::unique_ptr<JacobianProbe> linearize_numerically(std::span<const double> z, double t,
                                                         double fd_step = 1e-4) const;
};

using DenoiserPtr = std::shared_ptr<const Denoiser>;

}  // namespace pspc

#endif
