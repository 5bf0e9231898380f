#pragma once

#include "hglmm/errors.hpp"
#include "hglmm/matrix_io.hpp"
#include "hglmm/random.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <numbers>
#include <numeric>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace hglmm {

enum class Family { Gmm, Lmm, Hglmm };

std::string_view to_string(Family family);
Family parse_family(std::string_view token);

/// Per-(component, dimension) selector: 0 = Gaussian, 1 = Laplacian.
using BranchMatrix = MatrixX<std::uint8_t>;

struct GmmModel {
  Vector tau;    // K
  Matrix mu;     // K x D
  Matrix sigma;  // K x D, standard deviations

  Eigen::Index components() const { return tau.size(); }
  Eigen::Index dim() const { return mu.cols(); }
};

struct LmmModel {
  Vector tau;  // K
  Matrix m;    // K x D, locations
  Matrix s;    // K x D, scales

  Eigen::Index components() const { return tau.size(); }
  Eigen::Index dim() const { return m.cols(); }
};

/// Each coordinate of each component is either the Gaussian (mu, sigma) or the
/// Laplacian (m, s) factor, as chosen by b.
struct HglmmModel {
  Vector tau;
  Matrix mu;
  Matrix sigma;
  Matrix m;
  Matrix s;
  BranchMatrix b;

  Eigen::Index components() const { return tau.size(); }
  Eigen::Index dim() const { return mu.cols(); }
};

using MixtureModel = std::variant<GmmModel, LmmModel, HglmmModel>;

Family family_of(const MixtureModel& model);
Eigen::Index components(const MixtureModel& model);
Eigen::Index dim(const MixtureModel& model);

/// Checks shapes, the weight simplex and positive scales. Throws ValidationError.
void validate(const GmmModel& model);
void validate(const LmmModel& model);
void validate(const HglmmModel& model);
void validate(const MixtureModel& model);

// ---------------------------------------------------------------------------
// Densities
// ---------------------------------------------------------------------------

namespace detail {

template <typename Scalar>
Scalar gaussian_term(Scalar x, Scalar mu, Scalar sigma) {
  using std::log;
  using std::sqrt;
  const Scalar diff = x - mu;
  return -log(sqrt(Scalar(2) * std::numbers::pi_v<Scalar>) * sigma) - diff * diff / (Scalar(2) * sigma * sigma);
}

template <typename Scalar>
Scalar laplacian_term(Scalar x, Scalar m, Scalar s) {
  using std::abs;
  using std::log;
  return -log(Scalar(2) * s) - abs(x - m) / s;
}

template <typename Derived>
void require_positive(const Eigen::MatrixBase<Derived>& scale, const char* what) {
  if (!(scale.array() > typename Derived::Scalar(0)).all()) throw DomainError(std::string(what) + " must be positive");
}

template <typename A, typename B>
void require_same_size(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.size() != b.size()) throw ShapeError("density arguments differ in length");
}

}  // namespace detail

/// sum_d [ -log(2 s_d) - |x_d - m_d| / s_d ]
template <typename DX, typename DM, typename DS>
typename DX::Scalar log_pdf_laplacian(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DM>& m,
                                      const Eigen::MatrixBase<DS>& s) {
  detail::require_same_size(x, m);
  detail::require_same_size(x, s);
  detail::require_positive(s, "Laplacian scale");
  typename DX::Scalar acc(0);
  for (Eigen::Index d = 0; d < x.size(); ++d) acc += detail::laplacian_term(x(d), m(d), s(d));
  return acc;
}

/// sum_d [ -log(sqrt(2 pi) sigma_d) - (x_d - mu_d)^2 / (2 sigma_d^2) ]
template <typename DX, typename DM, typename DS>
typename DX::Scalar log_pdf_gaussian(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DM>& mu,
                                     const Eigen::MatrixBase<DS>& sigma) {
  detail::require_same_size(x, mu);
  detail::require_same_size(x, sigma);
  detail::require_positive(sigma, "Gaussian standard deviation");
  typename DX::Scalar acc(0);
  for (Eigen::Index d = 0; d < x.size(); ++d) acc += detail::gaussian_term(x(d), mu(d), sigma(d));
  return acc;
}

/// Per coordinate, the Laplacian term where b_d = 1 and the Gaussian term where b_d = 0.
/// b must be binary; any other value is a DomainError.
template <typename DX, typename DMu, typename DSig, typename DM, typename DS, typename DB>
typename DX::Scalar log_pdf_hybrid(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DMu>& mu,
                                   const Eigen::MatrixBase<DSig>& sigma, const Eigen::MatrixBase<DM>& m,
                                   const Eigen::MatrixBase<DS>& s, const Eigen::MatrixBase<DB>& b) {
  for (auto a : {mu.size(), sigma.size(), m.size(), s.size(), b.size()})
    if (a != x.size()) throw ShapeError("density arguments differ in length");
  detail::require_positive(sigma, "Gaussian standard deviation");
  detail::require_positive(s, "Laplacian scale");
  typename DX::Scalar acc(0);
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    const auto bd = b(d);
    if (bd == 1)
      acc += detail::laplacian_term(x(d), m(d), s(d));
    else if (bd == 0)
      acc += detail::gaussian_term(x(d), mu(d), sigma(d));
    else
      throw DomainError("hybrid branch selector must be 0 or 1");
  }
  return acc;
}

/// Log density of component k of a hybrid model at x.
double log_pdf_hybrid(const Eigen::Ref<const Vector>& x, const HglmmModel& model, Eigen::Index k);

/// Log density of component k (without its weight) at x.
double component_log_pdf(const MixtureModel& model, Eigen::Index k, const Eigen::Ref<const Vector>& x);

// ---------------------------------------------------------------------------
// EM building blocks
// ---------------------------------------------------------------------------

struct EStepResult {
  Matrix responsibilities;  // N x K, rows sum to one
  Vector log_likelihood;    // N, per-sample log p(x_i)

  double total() const;
};

/// Posterior memberships computed in the log domain with log-sum-exp.
EStepResult e_step(const Matrix& X, const MixtureModel& model);

double total_log_likelihood(const Matrix& X, const MixtureModel& model);

namespace detail {

/// Weighted median given indices that sort values ascending (stable).
template <typename DV, typename DW>
typename DV::Scalar weighted_median_presorted(const Eigen::MatrixBase<DV>& values,
                                              const Eigen::MatrixBase<DW>& weights,
                                              const std::vector<Eigen::Index>& order) {
  using Scalar = typename DV::Scalar;
  Scalar total(0);
  for (auto i : order) total += weights(i);
  if (!(total > Scalar(0))) throw DomainError("weighted_median: weights sum to zero");

  // The objective's right derivative at the j-th sorted value is 2*C_j - W, so the
  // smallest minimiser is the first value whose cumulative weight reaches W/2.
  Scalar cumulative(0);
  for (auto i : order) {
    cumulative += weights(i);
    if (Scalar(2) * cumulative >= total) return values(i);
  }
  return values(order.back());
}

template <typename DV>
std::vector<Eigen::Index> ascending_order(const Eigen::MatrixBase<DV>& values) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values(a) < values(b); });
  return order;
}

}  // namespace detail

/// Smallest sample value minimising sum_i w_i |values_i - v|.
template <typename DV, typename DW>
typename DV::Scalar weighted_median(const Eigen::MatrixBase<DV>& values, const Eigen::MatrixBase<DW>& weights) {
  using Scalar = typename DV::Scalar;
  if (values.size() != weights.size()) throw ShapeError("weighted_median: values and weights differ in length");
  if (values.size() == 0) throw DomainError("weighted_median: empty input");
  if ((weights.array() < Scalar(0)).any()) throw DomainError("weighted_median: negative weight");
  return detail::weighted_median_presorted(values, weights, detail::ascending_order(values));
}

struct MStepOptions {
  double scale_floor = 1e-6;
  /// Used to reseed dead components. Without it a dead component is a NumericalError.
  Rng* rng = nullptr;
};

/// Components whose total responsibility falls below this are reseeded.
inline constexpr double kDeadComponentMass = 1e-10;

GmmModel m_step_gmm(const Matrix& X, const Matrix& T, const MStepOptions& options = {});
LmmModel m_step_lmm(const Matrix& X, const Matrix& T, const MStepOptions& options = {});
HglmmModel m_step_hglmm(const Matrix& X, const Matrix& T, const MStepOptions& options = {});

/// The two per-(k, d) contributions that decide a hybrid branch: L (Laplacian) and G (Gaussian),
/// each sum_i T_ik * log-term(x_id).
struct BranchScores {
  Matrix laplacian;  // K x D
  Matrix gaussian;   // K x D
};

BranchScores branch_scores(const Matrix& X, const Matrix& T, const Matrix& mu, const Matrix& sigma,
                           const Matrix& m, const Matrix& s);

/// b = 1 where L > G, 0 otherwise (ties go to the Gaussian).
BranchMatrix select_branches(const BranchScores& scores);

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

struct FitConfig {
  Eigen::Index components = 30;
  int max_iters = 100;
  double rel_tol = 1e-6;
  std::uint64_t seed = 0;
  double scale_floor = 1e-6;
  int restarts = 1;
};

void validate(const FitConfig& config);

struct FitReport {
  std::vector<double> log_likelihood_trace;  // initial model, then one entry per EM pass
  int iterations_run = 0;
  bool converged = false;
};

struct FitResult {
  MixtureModel model;
  FitReport report;
};

/// k-means++ seeding followed by one hard-assignment statistics pass.
MixtureModel init_model(const Matrix& X, const FitConfig& config, Family family);

/// Runs EM from init_model until the relative log-likelihood gain drops below rel_tol
/// or max_iters passes have run. With restarts > 1 the best final likelihood wins.
FitResult fit_em(const Matrix& X, const FitConfig& config, Family family);

/// One M-step followed by nothing else; dispatches on family.
MixtureModel m_step(const Matrix& X, const Matrix& T, Family family, const MStepOptions& options = {});

// ---------------------------------------------------------------------------
// Serialization: "HGLMM-MODEL v1 family=<f> K=<K> D=<D>" then FVM1 blocks
// tau (1 x K), then mu, sigma (gmm) | m, s (lmm) | mu, sigma, m, s, b (hglmm).
// ---------------------------------------------------------------------------

void write_model(std::ostream& out, const MixtureModel& model);
MixtureModel read_model(std::istream& in);
void save_model(const MixtureModel& model, const std::filesystem::path& path);
MixtureModel load_model(const std::filesystem::path& path);

}  // namespace hglmm
