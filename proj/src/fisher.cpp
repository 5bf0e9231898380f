#include "hglmm/fisher.hpp"

#include "hglmm/errors.hpp"
#include "hglmm/parallel.hpp"

namespace hglmm {

void validate(const EncodeConfig& config) {
  if (!(config.alpha >= 0.0 && config.alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
}

namespace {

// True where coordinate (k, d) uses the Laplacian parameterisation.
bool laplacian_at(const GmmModel&, Eigen::Index, Eigen::Index) { return false; }
bool laplacian_at(const LmmModel&, Eigen::Index, Eigen::Index) { return true; }
bool laplacian_at(const HglmmModel& h, Eigen::Index k, Eigen::Index d) { return h.b(k, d) != 0; }

const Matrix* gaussian_blocks(const GmmModel& g, const Matrix*& sigma) { sigma = &g.sigma; return &g.mu; }
const Matrix* gaussian_blocks(const LmmModel&, const Matrix*& sigma) { sigma = nullptr; return nullptr; }
const Matrix* gaussian_blocks(const HglmmModel& h, const Matrix*& sigma) { sigma = &h.sigma; return &h.mu; }

const Matrix* laplacian_blocks(const GmmModel&, const Matrix*& s) { s = nullptr; return nullptr; }
const Matrix* laplacian_blocks(const LmmModel& l, const Matrix*& s) { s = &l.s; return &l.m; }
const Matrix* laplacian_blocks(const HglmmModel& h, const Matrix*& s) { s = &h.s; return &h.m; }

template <typename Model>
Vector fv_raw_impl(const Matrix& X, const Model& model, const Matrix& T) {
  const Eigen::Index kc = model.components(), dc = model.dim(), n = X.rows();
  const Matrix* sigma = nullptr;
  const Matrix* s = nullptr;
  const Matrix* mu = gaussian_blocks(model, sigma);
  const Matrix* m = laplacian_blocks(model, s);

  Vector out(fisher_length(kc, dc));
  for (Eigen::Index k = 0; k < kc; ++k)
    for (Eigen::Index d = 0; d < dc; ++d) {
      double loc = 0.0, scale = 0.0;
      if (laplacian_at(model, k, d)) {
        const double mkd = (*m)(k, d), skd = (*s)(k, d);
        for (Eigen::Index i = 0; i < n; ++i) {
          const double x = X(i, d), t = T(i, k);
          loc += t / skd * (x > mkd ? 1.0 : -1.0);
          scale += t * (std::abs(x - mkd) / (skd * skd) - 1.0 / skd);
        }
      } else {
        const double mukd = (*mu)(k, d), sigkd = (*sigma)(k, d);
        for (Eigen::Index i = 0; i < n; ++i) {
          const double diff = X(i, d) - mukd, t = T(i, k);
          loc += t * diff / (sigkd * sigkd);
          scale += t * (diff * diff / (sigkd * sigkd * sigkd) - 1.0 / sigkd);
        }
      }
      out(fisher_location_index(k, d, dc)) = loc;
      out(fisher_scale_index(k, d, dc)) = scale;
    }
  return out;
}

template <typename Model>
Vector fim_impl(const Model& model, double n) {
  const Eigen::Index kc = model.components(), dc = model.dim();
  const Matrix* sigma = nullptr;
  const Matrix* s = nullptr;
  gaussian_blocks(model, sigma);
  laplacian_blocks(model, s);

  Vector out(fisher_length(kc, dc));
  for (Eigen::Index k = 0; k < kc; ++k)
    for (Eigen::Index d = 0; d < dc; ++d) {
      const double weight = n * model.tau(k);
      double loc = 0.0, scale = 0.0;
      if (laplacian_at(model, k, d)) {
        const double skd = (*s)(k, d);
        loc = weight / (skd * skd);
        scale = weight / (skd * skd);
      } else {
        const double sigkd = (*sigma)(k, d);
        loc = weight / (sigkd * sigkd);
        scale = 2.0 * weight / (sigkd * sigkd);
      }
      out(fisher_location_index(k, d, dc)) = loc;
      out(fisher_scale_index(k, d, dc)) = scale;
    }
  return out;
}

void check_set(const Matrix& set, const MixtureModel& model) {
  if (set.rows() < 1) throw ShapeError("cannot encode an empty descriptor set");
  if (set.cols() != dim(model))
    throw ShapeError("descriptor dimension " + std::to_string(set.cols()) + " does not match model dimension " +
                     std::to_string(dim(model)));
}

}  // namespace

Vector fv_raw(const Matrix& set, const MixtureModel& model) {
  check_set(set, model);
  const Matrix T = e_step(set, model).responsibilities;
  return std::visit([&](const auto& m) { return fv_raw_impl(set, m, T); }, model);
}

FimDiagonal fim_diagonal(const MixtureModel& model, Eigen::Index n) {
  if (n < 1) throw DomainError("FIM needs at least one descriptor");
  Vector values = std::visit([&](const auto& m) { return fim_impl(m, static_cast<double>(n)); }, model);
  return {std::move(values), n};
}

Vector encode(const Matrix& set, const MixtureModel& model, const EncodeConfig& config) {
  validate(config);
  Vector v = fv_raw(set, model);
  if (config.apply_fim) v.array() /= fim_diagonal(model, set.rows()).values.array().sqrt();
  if (config.alpha != 1.0) v = power_normalized(v, config.alpha);
  if (config.apply_l2) v = l2_normalized(v);
  return v;
}

Vector mean_pool(const Matrix& set) {
  if (set.rows() < 1) throw ShapeError("cannot pool an empty descriptor set");
  return set.colwise().mean().transpose();
}

Vector fuse_concat(const Vector& a, const Vector& b) {
  if (!a.allFinite() || !b.allFinite()) throw ValidationError("fuse_concat: non-finite input");
  Vector out(a.size() + b.size());
  out << a, b;
  return out;
}

namespace {

template <typename Fn>
Matrix per_set(const Matrix& descriptors, const DescriptorSetIndex& index, Eigen::Index width, Fn&& fn) {
  index.check_bounds(static_cast<std::size_t>(descriptors.rows()));
  Matrix out(static_cast<Eigen::Index>(index.size()), width);
  parallel_for(index.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j)
      out.row(static_cast<Eigen::Index>(j)) = fn(extract_set(descriptors, index.entries[j])).transpose();
  }, 8);
  return out;
}

}  // namespace

Matrix encode_sets(const Matrix& descriptors, const DescriptorSetIndex& index, const MixtureModel& model,
                   const EncodeConfig& config) {
  validate(config);
  if (descriptors.cols() != dim(model)) throw ShapeError("descriptor dimension does not match model");
  return per_set(descriptors, index, fisher_length(components(model), dim(model)),
                 [&](const Matrix& set) { return encode(set, model, config); });
}

Matrix mean_pool_sets(const Matrix& descriptors, const DescriptorSetIndex& index) {
  return per_set(descriptors, index, descriptors.cols(), [](const Matrix& set) { return mean_pool(set); });
}

}  // namespace hglmm
