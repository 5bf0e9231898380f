#include "hglmm/mixtures.hpp"

#include "hglmm/parallel.hpp"

#include <fstream>
#include <limits>
#include <sstream>

namespace hglmm {

std::string_view to_string(Family family) {
  switch (family) {
    case Family::Gmm: return "gmm";
    case Family::Lmm: return "lmm";
    case Family::Hglmm: return "hglmm";
  }
  return "?";
}

Family parse_family(std::string_view token) {
  if (token == "gmm") return Family::Gmm;
  if (token == "lmm") return Family::Lmm;
  if (token == "hglmm") return Family::Hglmm;
  throw ValidationError("unknown mixture family '" + std::string(token) + "'");
}

Family family_of(const MixtureModel& model) {
  return static_cast<Family>(model.index());
}

Eigen::Index components(const MixtureModel& model) {
  return std::visit([](const auto& m) { return m.components(); }, model);
}

Eigen::Index dim(const MixtureModel& model) {
  return std::visit([](const auto& m) { return m.dim(); }, model);
}

// --- validation --------------------------------------------------------------

namespace {

void check_weights(const Vector& tau) {
  if (tau.size() < 1) throw ValidationError("mixture needs at least one component");
  if (!tau.allFinite() || (tau.array() <= 0.0).any()) throw ValidationError("mixture weights must be positive");
  if (std::abs(tau.sum() - 1.0) > 1e-12) throw ValidationError("mixture weights must sum to one");
}

void check_block(const Matrix& block, Eigen::Index k, Eigen::Index d, const char* name, bool positive) {
  if (block.rows() != k || block.cols() != d)
    throw ValidationError(std::string("parameter block ") + name + " has the wrong shape");
  if (!block.allFinite()) throw ValidationError(std::string("parameter block ") + name + " is not finite");
  if (positive && (block.array() <= 0.0).any())
    throw ValidationError(std::string("parameter block ") + name + " must be positive");
}

}  // namespace

void validate(const GmmModel& model) {
  check_weights(model.tau);
  const auto k = model.components(), d = model.dim();
  if (d < 1) throw ValidationError("mixture dimension must be positive");
  check_block(model.mu, k, d, "mu", false);
  check_block(model.sigma, k, d, "sigma", true);
}

void validate(const LmmModel& model) {
  check_weights(model.tau);
  const auto k = model.components(), d = model.dim();
  if (d < 1) throw ValidationError("mixture dimension must be positive");
  check_block(model.m, k, d, "m", false);
  check_block(model.s, k, d, "s", true);
}

void validate(const HglmmModel& model) {
  check_weights(model.tau);
  const auto k = model.components(), d = model.dim();
  if (d < 1) throw ValidationError("mixture dimension must be positive");
  check_block(model.mu, k, d, "mu", false);
  check_block(model.sigma, k, d, "sigma", true);
  check_block(model.m, k, d, "m", false);
  check_block(model.s, k, d, "s", true);
  if (model.b.rows() != k || model.b.cols() != d) throw ValidationError("parameter block b has the wrong shape");
  if ((model.b.array() > std::uint8_t{1}).any()) throw ValidationError("branch selectors must be 0 or 1");
}

void validate(const MixtureModel& model) {
  std::visit([](const auto& m) { validate(m); }, model);
}

// --- densities -----------------------------------------------------------------

namespace {

double row_log_pdf(const GmmModel& g, Eigen::Index k, const double* x) {
  double acc = 0.0;
  for (Eigen::Index d = 0; d < g.dim(); ++d) acc += detail::gaussian_term(x[d], g.mu(k, d), g.sigma(k, d));
  return acc;
}

double row_log_pdf(const LmmModel& l, Eigen::Index k, const double* x) {
  double acc = 0.0;
  for (Eigen::Index d = 0; d < l.dim(); ++d) acc += detail::laplacian_term(x[d], l.m(k, d), l.s(k, d));
  return acc;
}

double row_log_pdf(const HglmmModel& h, Eigen::Index k, const double* x) {
  double acc = 0.0;
  for (Eigen::Index d = 0; d < h.dim(); ++d)
    acc += h.b(k, d) ? detail::laplacian_term(x[d], h.m(k, d), h.s(k, d))
                     : detail::gaussian_term(x[d], h.mu(k, d), h.sigma(k, d));
  return acc;
}

template <typename Model>
EStepResult e_step_impl(const Matrix& X, const Model& model) {
  const Eigen::Index n = X.rows(), kc = model.components();
  EStepResult out{Matrix(n, kc), Vector(n)};
  const Vector log_tau = model.tau.array().log();

  parallel_for(static_cast<std::size_t>(n), [&](std::size_t begin, std::size_t end) {
    Vector a(kc);
    for (auto i = static_cast<Eigen::Index>(begin); i < static_cast<Eigen::Index>(end); ++i) {
      const double* x = X.row(i).data();
      for (Eigen::Index k = 0; k < kc; ++k) a(k) = log_tau(k) + row_log_pdf(model, k, x);
      const double peak = a.maxCoeff();
      double sum = 0.0;
      for (Eigen::Index k = 0; k < kc; ++k) {
        a(k) = std::exp(a(k) - peak);
        sum += a(k);
      }
      out.responsibilities.row(i) = a.transpose() / sum;
      out.log_likelihood(i) = peak + std::log(sum);
    }
  });
  return out;
}

}  // namespace

double log_pdf_hybrid(const Eigen::Ref<const Vector>& x, const HglmmModel& model, Eigen::Index k) {
  if (k < 0 || k >= model.components()) throw ShapeError("component index out of range");
  return log_pdf_hybrid(x, model.mu.row(k).transpose(), model.sigma.row(k).transpose(), model.m.row(k).transpose(),
                        model.s.row(k).transpose(), model.b.row(k).transpose());
}

double component_log_pdf(const MixtureModel& model, Eigen::Index k, const Eigen::Ref<const Vector>& x) {
  if (x.size() != dim(model)) throw ShapeError("sample dimension does not match model");
  if (k < 0 || k >= components(model)) throw ShapeError("component index out of range");
  return std::visit([&](const auto& m) { return row_log_pdf(m, k, x.data()); }, model);
}

double EStepResult::total() const {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < log_likelihood.size(); ++i) acc += log_likelihood(i);
  return acc;
}

EStepResult e_step(const Matrix& X, const MixtureModel& model) {
  if (X.cols() != dim(model))
    throw ShapeError("data has " + std::to_string(X.cols()) + " columns, model expects " + std::to_string(dim(model)));
  return std::visit([&](const auto& m) { return e_step_impl(X, m); }, model);
}

double total_log_likelihood(const Matrix& X, const MixtureModel& model) {
  return e_step(X, model).total();
}

// --- M-step ----------------------------------------------------------------------

namespace {

void check_m_step_inputs(const Matrix& X, const Matrix& T) {
  if (X.rows() < 1 || X.cols() < 1) throw ShapeError("M-step needs a non-empty data matrix");
  if (T.rows() != X.rows()) throw ShapeError("responsibilities and data differ in row count");
  if (T.cols() < 1) throw ShapeError("responsibilities have no components");
}

Vector component_mass(const Matrix& T) {
  Vector mass = Vector::Zero(T.cols());
  for (Eigen::Index i = 0; i < T.rows(); ++i) mass += T.row(i).transpose();
  return mass;
}

/// Weight update plus the list of components that need reseeding.
struct Weights {
  Vector tau;
  Vector mass;
  std::vector<Eigen::Index> dead;
};

Weights update_weights(const Matrix& T) {
  Weights w{Vector(), component_mass(T), {}};
  for (Eigen::Index k = 0; k < w.mass.size(); ++k)
    if (!(w.mass(k) >= kDeadComponentMass)) w.dead.push_back(k);
  const double total = w.mass.sum();
  if (w.dead.empty()) {
    w.tau = w.mass / total;
    return w;
  }
  // Floor every weight at 1/(2NK) and share the remaining mass proportionally.
  const double kc = static_cast<double>(T.cols());
  const double floor = 1.0 / (2.0 * static_cast<double>(T.rows()) * kc);
  w.tau = (floor + (1.0 - kc * floor) * (w.mass.array() / total)).matrix();
  return w;
}

struct GaussianStats {
  Matrix mu;
  Matrix sigma;
};

GaussianStats gaussian_stats(const Matrix& X, const Matrix& T, const Vector& mass, double scale_floor) {
  const Eigen::Index n = X.rows(), kc = T.cols(), dc = X.cols();
  GaussianStats g{Matrix::Zero(kc, dc), Matrix::Zero(kc, dc)};
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < kc; ++k) g.mu.row(k) += T(i, k) * X.row(i);
  for (Eigen::Index k = 0; k < kc; ++k) g.mu.row(k) /= mass(k);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < kc; ++k) g.sigma.row(k) += T(i, k) * (X.row(i) - g.mu.row(k)).array().square().matrix();
  for (Eigen::Index k = 0; k < kc; ++k)
    g.sigma.row(k) = (g.sigma.row(k) / mass(k)).array().sqrt().max(scale_floor).matrix();
  return g;
}

struct LaplacianStats {
  Matrix m;
  Matrix s;
};

LaplacianStats laplacian_stats(const Matrix& X, const Matrix& T, const Vector& mass, double scale_floor) {
  const Eigen::Index n = X.rows(), kc = T.cols(), dc = X.cols();
  LaplacianStats l{Matrix::Zero(kc, dc), Matrix::Zero(kc, dc)};
  for (Eigen::Index d = 0; d < dc; ++d) {
    const auto column = X.col(d);
    const auto order = detail::ascending_order(column);
    for (Eigen::Index k = 0; k < kc; ++k) {
      if (!(mass(k) >= kDeadComponentMass)) continue;
      const double loc = detail::weighted_median_presorted(column, T.col(k), order);
      double dev = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) dev += T(i, k) * std::abs(column(i) - loc);
      l.m(k, d) = loc;
      l.s(k, d) = std::max(dev / mass(k), scale_floor);
    }
  }
  return l;
}

/// Column statistics of the whole data set, used to reset dead components.
struct GlobalScale {
  Vector sigma;
  Vector s;
};

GlobalScale global_scale(const Matrix& X, double scale_floor) {
  const Matrix ones = Matrix::Ones(X.rows(), 1);
  const Vector mass = Vector::Constant(1, static_cast<double>(X.rows()));
  const auto g = gaussian_stats(X, ones, mass, scale_floor);
  const auto l = laplacian_stats(X, ones, mass, scale_floor);
  return {g.sigma.row(0).transpose(), l.s.row(0).transpose()};
}

/// Moves every dead component onto a random training sample with global scales.
template <typename Fn>
void reseed_dead(const Matrix& X, const std::vector<Eigen::Index>& dead, const MStepOptions& options, Fn&& assign) {
  if (dead.empty()) return;
  if (options.rng == nullptr)
    throw NumericalError("component " + std::to_string(dead.front()) + " has no responsibility mass");
  const auto scale = global_scale(X, options.scale_floor);
  for (auto k : dead) {
    const auto row = static_cast<Eigen::Index>(uniform_index(*options.rng, static_cast<std::size_t>(X.rows())));
    assign(k, X.row(row), scale);
  }
}

}  // namespace

GmmModel m_step_gmm(const Matrix& X, const Matrix& T, const MStepOptions& options) {
  check_m_step_inputs(X, T);
  auto w = update_weights(T);
  auto g = gaussian_stats(X, T, w.mass, options.scale_floor);
  reseed_dead(X, w.dead, options, [&](Eigen::Index k, const auto& x, const GlobalScale& scale) {
    g.mu.row(k) = x;
    g.sigma.row(k) = scale.sigma.transpose();
  });
  return {std::move(w.tau), std::move(g.mu), std::move(g.sigma)};
}

LmmModel m_step_lmm(const Matrix& X, const Matrix& T, const MStepOptions& options) {
  check_m_step_inputs(X, T);
  auto w = update_weights(T);
  auto l = laplacian_stats(X, T, w.mass, options.scale_floor);
  reseed_dead(X, w.dead, options, [&](Eigen::Index k, const auto& x, const GlobalScale& scale) {
    l.m.row(k) = x;
    l.s.row(k) = scale.s.transpose();
  });
  return {std::move(w.tau), std::move(l.m), std::move(l.s)};
}

HglmmModel m_step_hglmm(const Matrix& X, const Matrix& T, const MStepOptions& options) {
  check_m_step_inputs(X, T);
  auto w = update_weights(T);
  auto g = gaussian_stats(X, T, w.mass, options.scale_floor);
  auto l = laplacian_stats(X, T, w.mass, options.scale_floor);
  reseed_dead(X, w.dead, options, [&](Eigen::Index k, const auto& x, const GlobalScale& scale) {
    g.mu.row(k) = x;
    g.sigma.row(k) = scale.sigma.transpose();
    l.m.row(k) = x;
    l.s.row(k) = scale.s.transpose();
  });
  // Branches are chosen with the freshly updated parameters.
  auto b = select_branches(branch_scores(X, T, g.mu, g.sigma, l.m, l.s));
  return {std::move(w.tau), std::move(g.mu), std::move(g.sigma), std::move(l.m), std::move(l.s), std::move(b)};
}

MixtureModel m_step(const Matrix& X, const Matrix& T, Family family, const MStepOptions& options) {
  switch (family) {
    case Family::Gmm: return m_step_gmm(X, T, options);
    case Family::Lmm: return m_step_lmm(X, T, options);
    case Family::Hglmm: return m_step_hglmm(X, T, options);
  }
  throw ValidationError("unknown family");
}

BranchScores branch_scores(const Matrix& X, const Matrix& T, const Matrix& mu, const Matrix& sigma, const Matrix& m,
                           const Matrix& s) {
  check_m_step_inputs(X, T);
  const Eigen::Index kc = T.cols(), dc = X.cols();
  for (const Matrix* block : {&mu, &sigma, &m, &s})
    if (block->rows() != kc || block->cols() != dc) throw ShapeError("branch_scores: parameter shape mismatch");

  BranchScores out{Matrix::Zero(kc, dc), Matrix::Zero(kc, dc)};
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index k = 0; k < kc; ++k) {
      const double t = T(i, k);
      for (Eigen::Index d = 0; d < dc; ++d) {
        out.laplacian(k, d) += t * detail::laplacian_term(X(i, d), m(k, d), s(k, d));
        out.gaussian(k, d) += t * detail::gaussian_term(X(i, d), mu(k, d), sigma(k, d));
      }
    }
  return out;
}

BranchMatrix select_branches(const BranchScores& scores) {
  return (scores.laplacian.array() > scores.gaussian.array()).cast<std::uint8_t>().matrix();
}

// --- fitting -----------------------------------------------------------------------

void validate(const FitConfig& config) {
  if (config.components < 1) throw ValidationError("K must be at least 1");
  if (config.max_iters < 1) throw ValidationError("max_iters must be at least 1");
  if (!(config.rel_tol >= 0.0)) throw ValidationError("rel_tol must be non-negative");
  if (!(config.scale_floor > 0.0)) throw ValidationError("scale_floor must be positive");
  if (config.restarts < 1) throw ValidationError("restarts must be at least 1");
}

namespace {

void check_fit_inputs(const Matrix& X, const FitConfig& config) {
  validate(config);
  validate_matrix(X, "training data");
  if (X.rows() < config.components)
    throw ShapeError("need at least K=" + std::to_string(config.components) + " samples, got " +
                     std::to_string(X.rows()));
}

/// k-means++ seeding, then the nearest-centre assignment as a hard 0/1 matrix.
Matrix kmeanspp_assignment(const Matrix& X, Eigen::Index kc, Rng& rng) {
  const Eigen::Index n = X.rows();
  std::vector<Eigen::Index> centres;
  centres.push_back(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n))));
  Vector nearest = (X.rowwise() - X.row(centres[0])).rowwise().squaredNorm();
  while (static_cast<Eigen::Index>(centres.size()) < kc) {
    const double total = nearest.sum();
    Eigen::Index pick = n - 1;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += nearest(i);
        if (acc > target && nearest(i) > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n)));
    }
    centres.push_back(pick);
    nearest = nearest.cwiseMin((X.rowwise() - X.row(pick)).rowwise().squaredNorm());
  }

  Matrix T = Matrix::Zero(n, kc);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < kc; ++k) {
      const double d = (X.row(i) - X.row(centres[static_cast<std::size_t>(k)])).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    T(i, best) = 1.0;
  }
  return T;
}

FitResult fit_once(const Matrix& X, const FitConfig& config, Family family) {
  MixtureModel model = init_model(X, config, family);
  Rng reseed_rng(mix_seed(config.seed, 1));
  const MStepOptions options{config.scale_floor, &reseed_rng};

  FitReport report;
  auto e = e_step(X, model);
  report.log_likelihood_trace.push_back(e.total());
  for (int it = 0; it < config.max_iters; ++it) {
    model = m_step(X, e.responsibilities, family, options);
    e = e_step(X, model);
    const double before = report.log_likelihood_trace.back();
    const double after = e.total();
    report.log_likelihood_trace.push_back(after);
    report.iterations_run = it + 1;
    if (!std::isfinite(after)) throw NumericalError("log-likelihood became non-finite during EM");
    const double gain = (after - before) / std::max(std::abs(before), std::numeric_limits<double>::min());
    if (gain < config.rel_tol) {
      report.converged = true;
      break;
    }
  }
  return {std::move(model), std::move(report)};
}

}  // namespace

MixtureModel init_model(const Matrix& X, const FitConfig& config, Family family) {
  check_fit_inputs(X, config);
  Rng rng(config.seed);
  const Eigen::Index kc = config.components;
  const Matrix T = kmeanspp_assignment(X, kc, rng);
  MixtureModel model = m_step(X, T, family, {config.scale_floor, &rng});

  // Cluster sizes with a 1/(2NK) floor on every weight.
  const Vector counts = component_mass(T);
  const double floor = 1.0 / (2.0 * static_cast<double>(X.rows()) * static_cast<double>(kc));
  const Vector tau =
      (floor + (1.0 - static_cast<double>(kc) * floor) * (counts.array() / static_cast<double>(X.rows()))).matrix();
  std::visit([&](auto& m) { m.tau = tau; }, model);
  return model;
}

FitResult fit_em(const Matrix& X, const FitConfig& config, Family family) {
  check_fit_inputs(X, config);
  FitResult best = fit_once(X, config, family);
  for (int r = 1; r < config.restarts; ++r) {
    FitConfig attempt = config;
    attempt.seed = mix_seed(config.seed, static_cast<std::uint64_t>(r) + 100);
    auto candidate = fit_once(X, attempt, family);
    if (candidate.report.log_likelihood_trace.back() > best.report.log_likelihood_trace.back())
      best = std::move(candidate);
  }
  return best;
}

// --- serialization -------------------------------------------------------------------

void write_model(std::ostream& out, const MixtureModel& model) {
  validate(model);
  write_container_header(out, "HGLMM-MODEL", "v1",
                         {{"family", std::string(to_string(family_of(model)))},
                          {"K", std::to_string(components(model))},
                          {"D", std::to_string(dim(model))}});
  std::visit(
      [&](const auto& m) {
        write_fvm1(out, m.tau.transpose());
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, GmmModel>) {
          write_fvm1(out, m.mu);
          write_fvm1(out, m.sigma);
        } else if constexpr (std::is_same_v<T, LmmModel>) {
          write_fvm1(out, m.m);
          write_fvm1(out, m.s);
        } else {
          write_fvm1(out, m.mu);
          write_fvm1(out, m.sigma);
          write_fvm1(out, m.m);
          write_fvm1(out, m.s);
          write_fvm1(out, m.b.template cast<double>());
        }
      },
      model);
}

MixtureModel read_model(std::istream& in) {
  const auto header = read_container_header(in, "HGLMM-MODEL");
  const Family family = parse_family(header.field("family"));
  const auto kc = static_cast<Eigen::Index>(header.count_field("K"));
  const auto dc = static_cast<Eigen::Index>(header.count_field("D"));
  auto block = [&](Eigen::Index rows, Eigen::Index cols, const char* name) {
    Matrix m = read_fvm1(in);
    if (m.rows() != rows || m.cols() != cols)
      throw FormatError(std::string("model block ") + name + " has the wrong shape");
    return m;
  };
  const Vector tau = block(1, kc, "tau").transpose();
  MixtureModel model;
  switch (family) {
    case Family::Gmm: {
      Matrix mu = block(kc, dc, "mu");
      Matrix sigma = block(kc, dc, "sigma");
      model = GmmModel{tau, std::move(mu), std::move(sigma)};
      break;
    }
    case Family::Lmm: {
      Matrix m = block(kc, dc, "m");
      Matrix s = block(kc, dc, "s");
      model = LmmModel{tau, std::move(m), std::move(s)};
      break;
    }
    case Family::Hglmm: {
      Matrix mu = block(kc, dc, "mu");
      Matrix sigma = block(kc, dc, "sigma");
      Matrix m = block(kc, dc, "m");
      Matrix s = block(kc, dc, "s");
      const Matrix b = block(kc, dc, "b");
      if (((b.array() != 0.0) && (b.array() != 1.0)).any()) throw ValidationError("stored branch selectors must be 0 or 1");
      model = HglmmModel{tau, std::move(mu), std::move(sigma), std::move(m), std::move(s), b.cast<std::uint8_t>()};
      break;
    }
  }
  validate(model);
  return model;
}

void save_model(const MixtureModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  write_model(out, model);
}

MixtureModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return read_model(in);
}

}  // namespace hglmm
