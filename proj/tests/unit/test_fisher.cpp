#include "hglmm/errors.hpp"
#include "hglmm/fisher.hpp"
#include "hglmm/parallel.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <cmath>

using namespace hglmm;
using doctest::Approx;

namespace {

bool bitwise_equal(const Vector& a, const Vector& b) {
  return a.size() == b.size() && std::equal(a.data(), a.data() + a.size(), b.data(),
                                            [](double x, double y) { return std::bit_cast<std::uint64_t>(x) ==
                                                                            std::bit_cast<std::uint64_t>(y); });
}

}  // namespace

TEST_CASE("layout helpers") {
  CHECK(fisher_length(3, 4) == 24);
  CHECK(fisher_location_index(1, 2, 4) == 12);
  CHECK(fisher_scale_index(1, 2, 4) == 13);
  CHECK(fisher_scale_index(2, 3, 4) == 23);
}

TEST_CASE("GMM gradient at the mean of a single component") {
  Matrix sigma(1, 3);
  sigma << 0.5, 1.0, 2.0;
  const GmmModel g{Vector::Ones(1), Matrix::Constant(1, 3, 0.7), sigma};
  const Vector fv = fv_raw(Matrix::Constant(1, 3, 0.7), g);
  REQUIRE(fv.size() == 6);
  for (Eigen::Index d = 0; d < 3; ++d) {
    CHECK(fv(fisher_location_index(0, d, 3)) == 0.0);
    CHECK(fv(fisher_scale_index(0, d, 3)) == Approx(-1.0 / sigma(0, d)).epsilon(1e-15));
  }
}

TEST_CASE("LMM location gradient above the location is 1/s") {
  Matrix s(1, 2);
  s << 0.5, 4.0;
  const LmmModel l{Vector::Ones(1), Matrix::Zero(1, 2), s};
  Matrix x(1, 2);
  x << 1.0, 3.0;
  const Vector fv = fv_raw(x, l);
  CHECK(fv(0) == Approx(2.0).epsilon(1e-15));
  CHECK(fv(2) == Approx(0.25).epsilon(1e-15));
  // scale gradient: -1/s + |x-m|/s^2
  CHECK(fv(1) == Approx(-2.0 + 4.0).epsilon(1e-15));
  CHECK(fv(3) == Approx(-0.25 + 3.0 / 16.0).epsilon(1e-15));

  // At the kink the location gradient takes the negative branch.
  const Vector at = fv_raw(Matrix::Zero(1, 2), l);
  CHECK(at(0) == Approx(-2.0));
}

TEST_CASE("fv_raw matches finite differences of the log-likelihood") {
  Rng rng(31);
  const long double h = 1e-5L;
  for (auto family : {Family::Gmm, Family::Lmm, Family::Hglmm}) {
    for (int rep = 0; rep < 5; ++rep) {
      const auto model = oracle::random_model(rng, family, 3, 4);
      const Matrix set = oracle::random_matrix(rng, 10, 4, 1.5);
      const Vector fv = fv_raw(set, model);
      const auto base = oracle::from_model(model);
      for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t d = 0; d < 4; ++d)
          for (int which = 0; which < 2; ++which) {
            bool kink = false;
            for (Eigen::Index i = 0; i < 10 && base.comps[k].laplace[d]; ++i)
              kink = kink || std::fabs(set(i, static_cast<Eigen::Index>(d)) - base.comps[k].loc[d]) < 1e-3L;
            if (which == 0 && kink) continue;
            auto plus = base, minus = base;
            (which == 0 ? plus.comps[k].loc[d] : plus.comps[k].scale[d]) += h;
            (which == 0 ? minus.comps[k].loc[d] : minus.comps[k].scale[d]) -= h;
            const double fd =
                static_cast<double>((oracle::log_likelihood(set, plus) - oracle::log_likelihood(set, minus)) / (2 * h));
            const auto kk = static_cast<Eigen::Index>(k), dd = static_cast<Eigen::Index>(d);
            const double an = fv(which == 0 ? fisher_location_index(kk, dd, 4) : fisher_scale_index(kk, dd, 4));
            CHECK(std::abs(fd - an) <= 1e-4 * std::max({std::abs(fd), std::abs(an), 1e-6}));
          }
    }
  }
}

TEST_CASE("fv_raw is additive over disjoint sets") {
  Rng rng(32);
  for (auto family : {Family::Gmm, Family::Lmm, Family::Hglmm}) {
    const auto model = oracle::random_model(rng, family, 4, 3);
    const Matrix a = oracle::random_matrix(rng, 7, 3), b = oracle::random_matrix(rng, 5, 3);
    Matrix both(12, 3);
    both << a, b;
    const Vector sum = fv_raw(a, model) + fv_raw(b, model);
    const Vector joint = fv_raw(both, model);
    CHECK((joint - sum).lpNorm<Eigen::Infinity>() <= 1e-12 * std::max(1.0, joint.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("hybrid gradients with uniform branches equal the pure families bitwise") {
  Rng rng(33);
  const auto hm = std::get<HglmmModel>(oracle::random_model(rng, Family::Hglmm, 3, 4));
  const Matrix set = oracle::random_matrix(rng, 12, 4);
  HglmmModel h0 = hm, h1 = hm;
  h0.b.setZero();
  h1.b.setOnes();
  CHECK(bitwise_equal(fv_raw(set, h0), fv_raw(set, GmmModel{hm.tau, hm.mu, hm.sigma})));
  CHECK(bitwise_equal(fv_raw(set, h1), fv_raw(set, LmmModel{hm.tau, hm.m, hm.s})));
}

TEST_CASE("every encoder output has 2KD coordinates") {
  Rng rng(34);
  for (auto family : {Family::Gmm, Family::Lmm, Family::Hglmm}) {
    const auto model = oracle::random_model(rng, family, 5, 3);
    const Matrix set = oracle::random_matrix(rng, 4, 3);
    CHECK(fv_raw(set, model).size() == 30);
    CHECK(encode(set, model, {}).size() == 30);
    CHECK(fim_diagonal(model, 4).values.size() == 30);
  }
}

TEST_CASE("FIM closed forms") {
  const GmmModel g{Vector::Ones(1), Matrix::Zero(1, 2), Matrix::Constant(1, 2, 2.0)};
  const auto fg = fim_diagonal(g, 10);
  CHECK(fg.values(0) == Approx(2.5).epsilon(1e-15));
  CHECK(fg.values(1) == Approx(5.0).epsilon(1e-15));
  CHECK(fg.n_ref == 10);
  const LmmModel l{Vector::Ones(1), Matrix::Zero(1, 2), Matrix::Constant(1, 2, 2.0)};
  const auto fl = fim_diagonal(l, 10);
  CHECK(fl.values(0) == Approx(2.5).epsilon(1e-15));
  CHECK(fl.values(1) == Approx(2.5).epsilon(1e-15));
}

TEST_CASE("hybrid FIM equals the pure forms coordinate by coordinate") {
  Rng rng(35);
  const auto h = std::get<HglmmModel>(oracle::random_model(rng, Family::Hglmm, 3, 5));
  const auto fh = fim_diagonal(h, 7).values;
  const auto fg = fim_diagonal(GmmModel{h.tau, h.mu, h.sigma}, 7).values;
  const auto fl = fim_diagonal(LmmModel{h.tau, h.m, h.s}, 7).values;
  for (Eigen::Index k = 0; k < 3; ++k)
    for (Eigen::Index d = 0; d < 5; ++d) {
      const auto& src = h.b(k, d) == 1 ? fl : fg;
      CHECK(fh(fisher_location_index(k, d, 5)) == src(fisher_location_index(k, d, 5)));
      CHECK(fh(fisher_scale_index(k, d, 5)) == src(fisher_scale_index(k, d, 5)));
    }
}

TEST_CASE("power normalization") {
  Vector z(4);
  z << 4.0, -9.0, 0.0, 0.25;
  const Vector p = power_normalized(z, 0.5);
  CHECK(p(0) == 2.0);
  CHECK(p(1) == -3.0);
  CHECK(p(2) == 0.0);
  CHECK(p(3) == 0.5);
  CHECK(power_normalized(z, 1.0) == z);
  Rng rng(36);
  const Vector r = oracle::random_matrix(rng, 50, 1);
  const Vector q = power_normalized(r, 0.3);
  for (Eigen::Index i = 0; i < 50; ++i) CHECK((q(i) > 0) == (r(i) > 0));
}

TEST_CASE("L2 normalization") {
  Vector z(2);
  z << 3.0, 4.0;
  const Vector n = l2_normalized(z);
  CHECK(n(0) == Approx(0.6));
  CHECK(n(1) == Approx(0.8));
  CHECK(l2_normalized(Vector::Zero(3)) == Vector::Zero(3));
}

TEST_CASE("encode applies FIM scaling, then power, then L2") {
  Rng rng(37);
  for (auto family : {Family::Gmm, Family::Lmm, Family::Hglmm}) {
    const auto model = oracle::random_model(rng, family, 3, 3);
    const Matrix set = oracle::random_matrix(rng, 6, 3);
    const Vector raw = fv_raw(set, model);
    const Vector fim = fim_diagonal(model, 6).values;

    Vector want(raw.size());
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
      const double scaled = raw(i) / std::sqrt(fim(i));
      want(i) = (scaled > 0 ? 1.0 : scaled < 0 ? -1.0 : 0.0) * std::pow(std::abs(scaled), 0.5);
    }
    want /= want.norm();
    const Vector got = encode(set, model, {});
    CHECK((got - want).lpNorm<Eigen::Infinity>() <= 1e-14);
    CHECK(got.norm() == Approx(1.0).epsilon(1e-12));

    CHECK(bitwise_equal(encode(set, model, {1.0, false, false}), raw));
    const Vector no_l2 = encode(set, model, {1.0, true, false});
    CHECK((no_l2.array() * fim.array().sqrt() - raw.array()).abs().maxCoeff() <= 1e-12 * raw.lpNorm<Eigen::Infinity>());
  }
}

TEST_CASE("encode configuration is validated") {
  CHECK_THROWS_AS(validate(EncodeConfig{1.5, true, true}), ValidationError);
  CHECK_THROWS_AS(validate(EncodeConfig{-0.1, true, true}), ValidationError);
  CHECK_NOTHROW(validate(EncodeConfig{0.0, true, true}));
}

TEST_CASE("mean pooling") {
  Matrix one(1, 3);
  one << 1, 2, 3;
  CHECK(mean_pool(one) == one.row(0).transpose());
  Matrix two(2, 2);
  two << 0, 0, 2, 4;
  CHECK(mean_pool(two) == Eigen::Vector2d(1, 2));

  Rng rng(38);
  const Matrix set = oracle::random_matrix(rng, 9, 4);
  Matrix shuffled = set;
  for (Eigen::Index i = 8; i > 0; --i)
    shuffled.row(i).swap(shuffled.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(i + 1)))));
  CHECK(mean_pool(shuffled).isApprox(mean_pool(set), 1e-14));
}

TEST_CASE("fusion concatenates") {
  Rng rng(39);
  const Vector a = oracle::random_matrix(rng, 24, 1), b = oracle::random_matrix(rng, 24, 1);
  const Vector f = fuse_concat(a, b);
  CHECK(f.size() == 48);
  CHECK(f(24) == b(0));
  CHECK(f(23) == a(23));
  CHECK(fuse_concat(a, Vector(0)) == a);
}

TEST_CASE("batch encoders produce one row per set, independent of threads") {
  Rng rng(40);
  const auto model = oracle::random_model(rng, Family::Hglmm, 4, 3);
  const Matrix words = oracle::random_matrix(rng, 300, 3);
  DescriptorSetIndex idx;
  for (std::size_t s = 0; s < 30; ++s) idx.entries.push_back({"s" + std::to_string(s), s * 10, s * 10 + 10});

  set_thread_count(1);
  const Matrix one = encode_sets(words, idx, model, {});
  set_thread_count(6);
  const Matrix many = encode_sets(words, idx, model, {});
  set_thread_count(1);
  REQUIRE(one.rows() == 30);
  CHECK(one.cols() == 24);
  CHECK(std::memcmp(one.data(), many.data(), sizeof(double) * static_cast<std::size_t>(one.size())) == 0);
  CHECK(bitwise_equal(one.row(7).transpose(), encode(extract_set(words, idx.entries[7]), model, {})));

  const Matrix means = mean_pool_sets(words, idx);
  CHECK(means.rows() == 30);
  CHECK(means.row(3).transpose().isApprox(mean_pool(extract_set(words, idx.entries[3]))));
}
