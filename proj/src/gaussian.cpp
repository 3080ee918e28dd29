#include "pspc/gaussian.hpp"

#include "pspc/errors.hpp"

namespace pspc {

GaussianModel fit_gaussian(const ImageDataset& dataset) {
    const auto n = static_cast<Eigen::Index>(dataset.size());
    const auto d = static_cast<Eigen::Index>(dataset.dim());
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> data(
        dataset.values().data(), n, d);

    GaussianModel model;
    model.mean = data.colwise().mean().transpose();
    const Eigen::MatrixXd centered = data.rowwise() - model.mean.transpose();
    const Eigen::MatrixXd covariance = (centered.transpose() * centered) / static_cast<double>(n);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(covariance);
    if (solver.info() != Eigen::Success) {
        throw Error("covariance eigendecomposition failed");
    }
    model.eigenvalues = solver.eigenvalues().cwiseMax(0.0);
    model.basis = solver.eigenvectors();
    return model;
}

Image gaussian_denoise(const GaussianModel& model, std::span<const double> z, double t) {
    detail::require_positive_time(t, "gaussian_denoise");
    if (static_cast<Eigen::Index>(z.size()) != model.mean.size()) {
        throw ShapeMismatch("observation does not match the Gaussian model dimension");
    }
    Eigen::Map<const Eigen::VectorXd> zv(z.data(), static_cast<Eigen::Index>(z.size()));
    const double t2 = t * t;
    Eigen::VectorXd coeffs = model.basis.transpose() * (zv - model.mean);
    for (Eigen::Index k = 0; k < coeffs.size(); ++k) {
        const double lambda = model.eigenvalues[k];
        coeffs[k] *= lambda / (lambda + t2);
    }
    const Eigen::VectorXd x_hat = model.mean + model.basis * coeffs;
    return Image(x_hat.data(), x_hat.data() + x_hat.size());
}

}  // namespace pspc
