#pragma once

#include "hglmm/matrix_io.hpp"
#include "hglmm/mixtures.hpp"

#include <Eigen/Core>

namespace hglmm {

/// Fisher vectors are plain vectors of length 2*K*D laid out (k, d)-major with the
/// location gradient followed by the scale gradient:
///   [loc(0,0), scale(0,0), loc(0,1), scale(0,1), ..., loc(K-1,D-1), scale(K-1,D-1)]
/// "Location" is mu or m and "scale" is sigma or s, per the coordinate's branch.
/// No gradients with respect to the weights or the branch selectors are included.
inline Eigen::Index fisher_length(Eigen::Index components, Eigen::Index dim) { return 2 * components * dim; }
inline Eigen::Index fisher_location_index(Eigen::Index k, Eigen::Index d, Eigen::Index dim) { return 2 * (k * dim + d); }
inline Eigen::Index fisher_scale_index(Eigen::Index k, Eigen::Index d, Eigen::Index dim) { return 2 * (k * dim + d) + 1; }

struct FimDiagonal {
  Vector values;  // same layout as the Fisher vector, strictly positive
  Eigen::Index n_ref = 0;
};

struct EncodeConfig {
  double alpha = 0.5;  // power normalization exponent, in [0, 1]
  bool apply_fim = true;
  bool apply_l2 = true;
};

void validate(const EncodeConfig& config);

/// Gradient of the set's total log-likelihood with respect to every location and scale parameter.
Vector fv_raw(const Matrix& set, const MixtureModel& model);

/// Closed-form Fisher information diagonal for a set of n descriptors:
/// Gaussian N*tau/sigma^2 (location) and 2*N*tau/sigma^2 (scale); Laplacian N*tau/s^2 for both.
FimDiagonal fim_diagonal(const MixtureModel& model, Eigen::Index n);

/// sign(z) * |z|^alpha, element-wise.
template <typename Derived>
auto power_normalized(const Eigen::MatrixBase<Derived>& z, typename Derived::Scalar alpha) {
  return (z.array().sign() * z.array().abs().pow(alpha)).matrix();
}

/// z / ||z||_2, or z unchanged when it is identically zero.
template <typename Derived>
auto l2_normalized(const Eigen::MatrixBase<Derived>& z) {
  using Plain = typename Derived::PlainObject;
  const auto norm = z.norm();
  return Plain(norm > 0 ? Plain(z / norm) : Plain(z));
}

/// l2(power_alpha(fim^-1/2 .* fv_raw)), each stage controlled by config.
Vector encode(const Matrix& set, const MixtureModel& model, const EncodeConfig& config);

/// Column means of the set.
Vector mean_pool(const Matrix& set);

/// a followed by b.
Vector fuse_concat(const Vector& a, const Vector& b);

/// One encoded row per set, in index order.
Matrix encode_sets(const Matrix& descriptors, const DescriptorSetIndex& index, const MixtureModel& model,
                   const EncodeConfig& config);
Matrix mean_pool_sets(const Matrix& descriptors, const DescriptorSetIndex& index);

}  // namespace hglmm
