#pragma once

#include "hglmm/matrix_io.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <iosfwd>
#include <optional>

namespace hglmm {

struct CcaConfig {
  double reg = 0.0;               // ridge added to both within-set covariances
  std::optional<double> reg_x;    // per-side overrides
  std::optional<double> reg_y;
  Eigen::Index dims = 0;          // 0 selects min(p, q, n - 1)
};

struct CcaModel {
  Vector mean_x;      // p
  Vector mean_y;      // q
  Matrix proj_x;      // r x p
  Matrix proj_y;      // r x q
  Vector correlations;  // r, descending

  Eigen::Index dims() const { return correlations.size(); }
};

enum class Side { X, Y };

/// Regularized linear CCA. Both views are whitened with (C + reg I)^{-1/2}; the singular
/// vectors of the whitened cross-covariance give the paired directions and the singular
/// values the canonical correlations. Rows of X and Y are paired observations.
CcaModel cca_fit(const Matrix& X, const Matrix& Y, const CcaConfig& config = {});

/// (M - mean_side) * proj_side^T
Matrix project(const CcaModel& model, Side side, const Matrix& M);

/// Cosine similarity of u and v after scaling coordinate j by correlations_j^weight_exp.
/// Returns -infinity when either weighted vector is zero.
double similarity(const Vector& u, const Vector& v, double weight_exp, const Vector& correlations);

/// Rows scaled by correlations^weight_exp and normalized to unit length, so that
/// similarity() between rows reduces to a dot product. Zero rows stay zero.
Matrix similarity_embedding(const Matrix& rows, double weight_exp, const Vector& correlations);

/// "HGLMM-CCA v1 p=<p> q=<q> r=<r>" then FVM1 blocks mean_x, mean_y, proj_x, proj_y, correlations.
void write_cca(std::ostream& out, const CcaModel& model);
CcaModel read_cca(std::istream& in);
void save_cca(const CcaModel& model, const std::filesystem::path& path);
CcaModel load_cca(const std::filesystem::path& path);

}  // namespace hglmm
