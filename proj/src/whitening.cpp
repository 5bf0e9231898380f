#include "hglmm/whitening.hpp"

#include "hglmm/errors.hpp"
#include "hglmm/random.hpp"

#include <Eigen/Eigenvalues>

#include <fstream>

namespace hglmm {

std::string_view to_string(TransformKind kind) { return kind == TransformKind::Pca ? "pca" : "ica"; }

TransformKind parse_transform_kind(std::string_view token) {
  if (token == "pca") return TransformKind::Pca;
  if (token == "ica") return TransformKind::Ica;
  throw ValidationError("unknown transform kind '" + std::string(token) + "'");
}

namespace {

constexpr double kRankTolerance = 1e-10;

struct Spectrum {
  Vector mean;
  Vector values;        // descending
  Eigen::MatrixXd axes;  // columns, matching values
  Eigen::Index rank = 0;
};

Spectrum covariance_spectrum(const Matrix& X, Eigen::Index out_dim) {
  validate_matrix(X, "input");
  if (X.rows() < 2) throw ShapeError("need at least two samples");
  if (out_dim < 1 || out_dim > X.cols())
    throw ShapeError("output dimension must lie in [1, " + std::to_string(X.cols()) + "]");

  Spectrum sp;
  sp.mean = X.colwise().mean().transpose();
  const Eigen::MatrixXd centred = X.rowwise() - sp.mean.transpose();
  const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(X.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericalError("covariance eigendecomposition failed");

  sp.values = solver.eigenvalues().reverse();
  sp.axes = solver.eigenvectors().rowwise().reverse();
  const double top = sp.values(0);
  if (!(top > 0.0)) throw NumericalError("data has zero variance");
  sp.rank = (sp.values.array() > kRankTolerance * top).count();
  if (out_dim > sp.rank)
    throw NumericalError("requested " + std::to_string(out_dim) + " components but the data has numerical rank " +
                         std::to_string(sp.rank));
  return sp;
}

/// Flip so the largest-magnitude entry is positive.
void fix_sign(Eigen::Ref<Eigen::RowVectorXd> row) {
  Eigen::Index arg = 0;
  row.cwiseAbs().maxCoeff(&arg);
  if (row(arg) < 0) row = -row;
}

/// (W W^T)^{-1/2} W
Eigen::MatrixXd symmetric_decorrelation(const Eigen::MatrixXd& W) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(W * W.transpose());
  const Vector inv_sqrt = solver.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  return solver.eigenvectors() * inv_sqrt.asDiagonal() * solver.eigenvectors().transpose() * W;
}

}  // namespace

LinearTransform pca_fit(const Matrix& X, Eigen::Index out_dim) {
  const Spectrum sp = covariance_spectrum(X, out_dim);
  LinearTransform t{TransformKind::Pca, sp.mean, sp.axes.leftCols(out_dim).transpose()};
  for (Eigen::Index r = 0; r < t.weights.rows(); ++r) fix_sign(t.weights.row(r));
  return t;
}

IcaResult ica_fit(const Matrix& X, Eigen::Index out_dim, const IcaOptions& options) {
  if (options.max_iters < 1) throw ValidationError("ICA needs at least one iteration");
  const Spectrum sp = covariance_spectrum(X, out_dim);
  const Eigen::MatrixXd whitener = sp.values.head(out_dim).cwiseSqrt().cwiseInverse().asDiagonal() *
                                   sp.axes.leftCols(out_dim).transpose();  // r x D
  const Eigen::MatrixXd Z = (X.rowwise() - sp.mean.transpose()) * whitener.transpose();  // N x r
  const double n = static_cast<double>(Z.rows());

  Rng rng(options.seed);
  Eigen::MatrixXd W(out_dim, out_dim);
  for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = standard_normal(rng);
  W = symmetric_decorrelation(W);

  IcaResult result;
  Eigen::MatrixXd best = W;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int it = 0; it < options.max_iters; ++it) {
    const Eigen::MatrixXd projected = Z * W.transpose();  // N x r
    const Eigen::ArrayXXd g = projected.array().tanh();
    const Vector g_prime_mean = (1.0 - g.square()).colwise().mean().transpose();
    Eigen::MatrixXd next = g.matrix().transpose() * Z / n - g_prime_mean.asDiagonal() * W;
    next = symmetric_decorrelation(next);
    if (!next.allFinite()) break;

    const double gap = (1.0 - (next * W.transpose()).diagonal().array().abs()).abs().maxCoeff();
    W = next;
    result.iterations = it + 1;
    if (gap < best_gap) {
      best_gap = gap;
      best = W;
    }
    if (gap < options.tol) {
      result.converged = true;
      break;
    }
  }

  result.transform = {TransformKind::Ica, sp.mean, best * whitener};
  return result;
}

Matrix apply(const LinearTransform& transform, const Matrix& X) {
  if (X.cols() != transform.in_dim())
    throw ShapeError("transform expects " + std::to_string(transform.in_dim()) + " columns, got " +
                     std::to_string(X.cols()));
  return (X.rowwise() - transform.mean.transpose()) * transform.weights.transpose();
}

void write_transform(std::ostream& out, const LinearTransform& transform) {
  if (transform.mean.size() != transform.in_dim()) throw ValidationError("transform mean has the wrong length");
  write_container_header(out, "HGLMM-TRANSFORM", "v1",
                         {{"kind", std::string(to_string(transform.kind))},
                          {"D_in", std::to_string(transform.in_dim())},
                          {"D_out", std::to_string(transform.out_dim())}});
  write_fvm1(out, transform.mean.transpose());
  write_fvm1(out, transform.weights);
}

LinearTransform read_transform(std::istream& in) {
  const auto header = read_container_header(in, "HGLMM-TRANSFORM");
  LinearTransform t;
  t.kind = parse_transform_kind(header.field("kind"));
  const auto d_in = static_cast<Eigen::Index>(header.count_field("D_in"));
  const auto d_out = static_cast<Eigen::Index>(header.count_field("D_out"));
  const Matrix mean = read_fvm1(in);
  t.weights = read_fvm1(in);
  if (mean.rows() != 1 || mean.cols() != d_in || t.weights.rows() != d_out || t.weights.cols() != d_in)
    throw FormatError("transform blocks do not match the header");
  if (d_out > d_in) throw FormatError("transform output dimension exceeds input dimension");
  t.mean = mean.row(0).transpose();
  return t;
}

void save_transform(const LinearTransform& transform, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  write_transform(out, transform);
}

LinearTransform load_transform(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return read_transform(in);
}

}  // namespace hglmm
