#include "hglmm/cca.hpp"

#include "hglmm/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <fstream>
#include <limits>

namespace hglmm {

namespace {

Eigen::MatrixXd inverse_sqrt(const Eigen::MatrixXd& cov, double reg, const char* side) {
  if (!(reg >= 0.0)) throw ValidationError("regularization must be non-negative");
  Eigen::MatrixXd c = cov;
  c.diagonal().array() += reg;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(c);
  if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  const Vector& values = solver.eigenvalues();
  const double top = values.maxCoeff();
  if (!(top > 0.0) || values.minCoeff() <= 1e-12 * top)
    throw NumericalError(std::string("within-set covariance of ") + side +
                         " is singular; increase the regularization");
  return solver.eigenvectors() * values.cwiseSqrt().cwiseInverse().asDiagonal() * solver.eigenvectors().transpose();
}

}  // namespace

CcaModel cca_fit(const Matrix& X, const Matrix& Y, const CcaConfig& config) {
  const Eigen::Index n = X.rows(), p = X.cols(), q = Y.cols();
  if (Y.rows() != n) throw ShapeError("CCA views must have the same number of rows");
  if (n < 2) throw ShapeError("CCA needs at least two paired observations");
  if (p < 1 || q < 1) throw ShapeError("CCA views must have at least one column");
  if (!X.allFinite() || !Y.allFinite()) throw ValidationError("CCA input contains non-finite values");
  const Eigen::Index max_dims = std::min(p, q);
  const Eigen::Index r = config.dims > 0 ? config.dims : std::min(max_dims, n - 1);
  if (r > max_dims) throw ShapeError("CCA dimension exceeds min(p, q)");

  CcaModel model;
  model.mean_x = X.colwise().mean().transpose();
  model.mean_y = Y.colwise().mean().transpose();
  const Eigen::MatrixXd xc = X.rowwise() - model.mean_x.transpose();
  const Eigen::MatrixXd yc = Y.rowwise() - model.mean_y.transpose();
  const double denom = static_cast<double>(n - 1);

  const Eigen::MatrixXd wx = inverse_sqrt(xc.transpose() * xc / denom, config.reg_x.value_or(config.reg), "X");
  const Eigen::MatrixXd wy = inverse_sqrt(yc.transpose() * yc / denom, config.reg_y.value_or(config.reg), "Y");
  const Eigen::MatrixXd cross = wx * (xc.transpose() * yc / denom) * wy;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeThinU | Eigen::ComputeThinV);
  model.correlations = svd.singularValues().head(r);
  model.proj_x = (wx * svd.matrixU().leftCols(r)).transpose();
  model.proj_y = (wy * svd.matrixV().leftCols(r)).transpose();

  // Pair signs are arbitrary; make the largest-magnitude entry of each X direction positive.
  for (Eigen::Index j = 0; j < r; ++j) {
    Eigen::Index arg = 0;
    model.proj_x.row(j).cwiseAbs().maxCoeff(&arg);
    if (model.proj_x(j, arg) < 0) {
      model.proj_x.row(j) *= -1.0;
      model.proj_y.row(j) *= -1.0;
    }
  }
  return model;
}

Matrix project(const CcaModel& model, Side side, const Matrix& M) {
  const Vector& mean = side == Side::X ? model.mean_x : model.mean_y;
  const Matrix& proj = side == Side::X ? model.proj_x : model.proj_y;
  if (M.cols() != proj.cols())
    throw ShapeError("projection expects " + std::to_string(proj.cols()) + " columns, got " + std::to_string(M.cols()));
  if (M.rows() == 0) return Matrix(0, proj.rows());
  return (M.rowwise() - mean.transpose()) * proj.transpose();
}

double similarity(const Vector& u, const Vector& v, double weight_exp, const Vector& correlations) {
  if (u.size() != v.size() || u.size() != correlations.size()) throw ShapeError("similarity: length mismatch");
  if (!(weight_exp >= 0.0)) throw DomainError("similarity: weight exponent must be non-negative");
  const Eigen::ArrayXd w = correlations.array().pow(weight_exp);
  const Eigen::ArrayXd a = u.array() * w, b = v.array() * w;
  const double na = a.matrix().norm(), nb = b.matrix().norm();
  if (na == 0.0 || nb == 0.0) return -std::numeric_limits<double>::infinity();
  return (a * b).sum() / (na * nb);
}

Matrix similarity_embedding(const Matrix& rows, double weight_exp, const Vector& correlations) {
  if (rows.cols() != correlations.size()) throw ShapeError("similarity_embedding: width mismatch");
  if (!(weight_exp >= 0.0)) throw DomainError("similarity: weight exponent must be non-negative");
  Matrix out = rows.array().rowwise() * correlations.array().pow(weight_exp).transpose();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm > 0.0) out.row(i) /= norm;
  }
  return out;
}

void write_cca(std::ostream& out, const CcaModel& model) {
  write_container_header(out, "HGLMM-CCA", "v1",
                         {{"p", std::to_string(model.proj_x.cols())},
                          {"q", std::to_string(model.proj_y.cols())},
                          {"r", std::to_string(model.dims())}});
  write_fvm1(out, model.mean_x.transpose());
  write_fvm1(out, model.mean_y.transpose());
  write_fvm1(out, model.proj_x);
  write_fvm1(out, model.proj_y);
  write_fvm1(out, model.correlations.transpose());
}

CcaModel read_cca(std::istream& in) {
  const auto header = read_container_header(in, "HGLMM-CCA");
  const auto p = static_cast<Eigen::Index>(header.count_field("p"));
  const auto q = static_cast<Eigen::Index>(header.count_field("q"));
  const auto r = static_cast<Eigen::Index>(header.count_field("r"));
  auto block = [&](Eigen::Index rows, Eigen::Index cols, const char* name) {
    Matrix m = read_fvm1(in);
    if (m.rows() != rows || m.cols() != cols) throw FormatError(std::string("CCA block ") + name + " has the wrong shape");
    return m;
  };
  CcaModel model;
  model.mean_x = block(1, p, "mean_x").transpose();
  model.mean_y = block(1, q, "mean_y").transpose();
  model.proj_x = block(r, p, "proj_x");
  model.proj_y = block(r, q, "proj_y");
  model.correlations = block(1, r, "correlations").transpose();
  return model;
}

void save_cca(const CcaModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  write_cca(out, model);
}

CcaModel load_cca(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return read_cca(in);
}

}  // namespace hglmm
