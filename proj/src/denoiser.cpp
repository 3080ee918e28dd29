#include "pspc/denoiser.hpp"

#include <vector>

#include "pspc/errors.hpp"

namespace pspc {

namespace {

class FiniteDifferenceProbe : public JacobianProbe {
public:
    FiniteDifferenceProbe(const Denoiser& denoiser, std::span<const double> z, double t, double step)
        : denoiser_(denoiser), z_(z.begin(), z.end()), t_(t), step_(step), output_(denoiser.denoise(z, t)) {}

    const Image& output() const override { return output_; }

    void column(std::size_t j, std::span<double> out) const override {
        if (j >= z_.size() || out.size() != z_.size()) throw ShapeMismatch("jacobian column out of range");
        std::vector<double> shifted = z_;
        shifted[j] = z_[j] + step_;
        const Image plus = denoiser_.denoise(shifted, t_);
        shifted[j] = z_[j] - step_;
        const Image minus = denoiser_.denoise(shifted, t_);
        const double inv = 1.0 / (2.0 * step_);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (plus[i] - minus[i]) * inv;
    }

    bool analytic() const override { return false; }

private:
    const Denoiser& denoiser_;
    std::vector<double> z_;
    double t_;
    double step_;
    Image output_;
};

}  // namespace

Image Denoiser::denoise_at(std::span<const double> z, double t, std::size_t, std::size_t) const {
    return denoise(z, t);
}

std::unique_ptr<JacobianProbe> Denoiser::linearize(std::span<const double> z, double t, double fd_step) const {
    return linearize_numerically(z, t, fd_step);
}

std::unique_ptr<JacobianProbe> Denoiser::linearize_numerically(std::span<const double> z, double t,
                                                               double fd_step) const {
    detail::require_positive_time(t, "linearize");
    if (!(fd_step > 0.0)) throw ConfigError("finite-difference step must be positive");
    if (z.size() != shape().size()) throw ShapeMismatch("observation does not match the denoiser's image shape");
    return std::make_unique<FiniteDifferenceProbe>(*this, z, t, fd_step);
}

}  // namespace pspc
