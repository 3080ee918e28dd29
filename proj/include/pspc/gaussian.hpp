#ifndef PSPC_GAUSSIAN_HPP
#define PSPC_GAUSSIAN_HPP

#include <Eigen/Dense>
#include <span>

#include "pspc/dataset.hpp"

namespace pspc {

/// Mean and eigendecomposition of the empirical covariance (divided by N).
struct GaussianModel {
    Eigen::VectorXd mean;
    Eigen::VectorXd eigenvalues;  // clamped at 0
    Eigen::MatrixXd basis;        // orthonormal columns
};

GaussianModel fit_gaussian(const ImageDataset& dataset);

/// x_hat = mu + Sigma (Sigma + t^2 I)^{-1} (z - mu), applied in the eigenbasis.
Image gaussian_denoise(const GaussianModel& model, std::span<const double> z, double t);

}  // namespace pspc

#endif
