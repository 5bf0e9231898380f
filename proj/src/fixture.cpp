#include "hglmm/fixture.hpp"

#include "hglmm/errors.hpp"
#include "hglmm/random.hpp"

#include <cstdio>

namespace hglmm {

namespace {

std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%04zu", prefix, i);
  return buf;
}

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * standard_normal(rng);
  return m;
}

}  // namespace

Fixture generate_fixture(const FixtureConfig& c) {
  if (c.images < 3 || c.sentences_per_image < 1) throw ValidationError("fixture needs at least 3 images and 1 sentence each");
  if (c.train_images + c.validation_images >= c.images) throw ValidationError("fixture splits leave no test images");
  if (c.min_words < 1 || c.max_words < c.min_words) throw ValidationError("bad fixture sentence length range");
  if (c.latent_dim < 1 || c.image_dim < 1 || c.word_dim < 1 || c.topics < 1)
    throw ValidationError("fixture dimensions must be positive");

  Rng rng(c.seed);
  const Matrix image_map = gaussian_matrix(c.image_dim, c.latent_dim, 1.0, rng);
  const Matrix word_map = gaussian_matrix(c.word_dim, c.latent_dim, 1.0, rng);
  const Matrix topic_centres = gaussian_matrix(c.topics, c.word_dim, 2.0, rng);

  Fixture f;
  f.images.resize(static_cast<Eigen::Index>(c.images), c.image_dim);
  std::vector<Vector> word_rows;
  std::vector<std::string> image_names;

  for (std::size_t img = 0; img < c.images; ++img) {
    Vector z(c.latent_dim);
    for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = standard_normal(rng);

    Vector feature = image_map * z;
    for (Eigen::Index j = 0; j < feature.size(); ++j) feature(j) += c.image_noise * standard_normal(rng);
    f.images.row(static_cast<Eigen::Index>(img)) = feature.transpose();
    image_names.push_back(numbered("img", img));

    const Split split = img < c.train_images                          ? Split::Train
                        : img < c.train_images + c.validation_images ? Split::Validation
                                                                      : Split::Test;
    const Vector shift = word_map * z;
    for (std::size_t s = 0; s < c.sentences_per_image; ++s) {
      const std::string sid = numbered("sen", img * c.sentences_per_image + s);
      const std::size_t len = c.min_words + uniform_index(rng, c.max_words - c.min_words + 1);
      const std::size_t begin = word_rows.size();
      for (std::size_t w = 0; w < len; ++w) {
        const auto topic = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(c.topics)));
        Vector word = topic_centres.row(topic).transpose() + shift;
        for (Eigen::Index j = 0; j < word.size(); ++j) word(j) += c.word_noise * standard_laplace(rng);
        word_rows.push_back(std::move(word));
      }
      f.sentences.entries.push_back({sid, begin, word_rows.size()});
      f.manifest.pairs.push_back({sid, image_names.back(), split});
    }
  }

  f.words.resize(static_cast<Eigen::Index>(word_rows.size()), c.word_dim);
  for (std::size_t i = 0; i < word_rows.size(); ++i) f.words.row(static_cast<Eigen::Index>(i)) = word_rows[i].transpose();
  f.image_ids = row_labels(image_names);
  return f;
}

void write_fixture(const Fixture& fixture, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_matrix(fixture.words, dir / "words.fvm");
  save_set_index(fixture.sentences, dir / "sentences.tsv");
  save_matrix(fixture.images, dir / "images.fvm");
  save_set_index(fixture.image_ids, dir / "images.tsv");
  save_manifest(fixture.manifest, dir / "manifest.tsv");
}

}  // namespace hglmm
