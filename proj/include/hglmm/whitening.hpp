#pragma once

#include "hglmm/matrix_io.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string_view>

namespace hglmm {

enum class TransformKind { Pca, Ica };

std::string_view to_string(TransformKind kind);
TransformKind parse_transform_kind(std::string_view token);

/// y = weights * (x - mean). Rows of weights are output components.
struct LinearTransform {
  TransformKind kind = TransformKind::Pca;
  Vector mean;     // D_in
  Matrix weights;  // D_out x D_in

  Eigen::Index in_dim() const { return weights.cols(); }
  Eigen::Index out_dim() const { return weights.rows(); }
};

/// Principal axes of the sample covariance, largest variance first. Each row is unit
/// length with its largest-magnitude entry positive.
LinearTransform pca_fit(const Matrix& X, Eigen::Index out_dim);

struct IcaOptions {
  std::uint64_t seed = 0;
  int max_iters = 500;
  double tol = 1e-6;
};

struct IcaResult {
  LinearTransform transform;
  bool converged = false;
  int iterations = 0;
};

/// PCA whitening followed by symmetric fixed-point ICA with the logcosh contrast.
/// The unmixing rows are orthonormal in the whitened space, so outputs have unit
/// covariance on the training data. Non-convergence is reported, not thrown; the
/// iterate closest to convergence is returned.
IcaResult ica_fit(const Matrix& X, Eigen::Index out_dim, const IcaOptions& options = {});

Matrix apply(const LinearTransform& transform, const Matrix& X);

/// "HGLMM-TRANSFORM v1 kind=<pca|ica> D_in=<n> D_out=<m>" then FVM1 blocks mean (1 x D_in), weights.
void write_transform(std::ostream& out, const LinearTransform& transform);
LinearTransform read_transform(std::istream& in);
void save_transform(const LinearTransform& transform, const std::filesystem::path& path);
LinearTransform load_transform(const std::filesystem::path& path);

}  // namespace hglmm
