#include "hglmm/errors.hpp"
#include "hglmm/fixture.hpp"
#include "hglmm/pipeline.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <cmath>
#include <set>

using namespace hglmm;
using doctest::Approx;

namespace {

FixtureConfig small_fixture(std::uint64_t seed = 0) {
  FixtureConfig c;
  c.images = 30;
  c.sentences_per_image = 3;
  c.train_images = 18;
  c.validation_images = 6;
  c.seed = seed;
  return c;
}

LabeledRows image_rows(const Fixture& f) { return {f.image_ids.ids(), f.images}; }

}  // namespace

TEST_CASE("fixture shape and splits") {
  const Fixture f = generate_fixture({});
  CHECK(f.images.rows() == 100);
  CHECK(f.images.cols() == 16);
  CHECK(f.sentences.size() == 500);
  CHECK(f.manifest.pairs.size() == 500);
  CHECK(f.words.cols() == 10);
  CHECK(f.image_ids.is_row_labels());
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& [id, split] : f.manifest.image_splits()) ++counts[static_cast<int>(split)];
  CHECK(counts[0] == 60);
  CHECK(counts[1] == 20);
  CHECK(counts[2] == 20);
  for (const auto& e : f.sentences.entries) {
    CHECK(e.size() >= 6);
    CHECK(e.size() <= 10);
  }
  CHECK(f.sentences.entries.back().end == static_cast<std::size_t>(f.words.rows()));
  CHECK_NOTHROW(validate_set_index(f.sentences));
  CHECK_NOTHROW(validate_manifest(f.manifest));
}

TEST_CASE("fixture is deterministic per seed and written in module formats") {
  const Fixture a = generate_fixture(small_fixture(4)), b = generate_fixture(small_fixture(4));
  CHECK(a.words == b.words);
  CHECK(a.images == b.images);
  CHECK_FALSE(generate_fixture(small_fixture(5)).words == a.words);

  testutil::TempDir dir;
  write_fixture(a, dir.path());
  CHECK(load_matrix(dir / "words.fvm") == a.words);
  CHECK(load_matrix(dir / "images.fvm") == a.images);
  CHECK(load_set_index(dir / "sentences.tsv").ids() == a.sentences.ids());
  CHECK(load_set_index(dir / "images.tsv").is_row_labels());
  CHECK(load_manifest(dir / "manifest.tsv").pairs.size() == a.manifest.pairs.size());
}

TEST_CASE("fixture configuration errors") {
  FixtureConfig c = small_fixture();
  c.train_images = 25;
  CHECK_THROWS_AS(generate_fixture(c), ValidationError);
  c = small_fixture();
  c.max_words = 2;
  CHECK_THROWS_AS(generate_fixture(c), ValidationError);
}

TEST_CASE("encoding names and families") {
  CHECK(parse_encoding("gmm+hglmm") == Encoding::GmmHglmm);
  CHECK(to_string(Encoding::Mean) == "mean");
  CHECK(families_for(Encoding::GmmHglmm) == std::vector<Family>{Family::Gmm, Family::Hglmm});
  CHECK(families_for(Encoding::Mean).empty());
  CHECK_THROWS_AS(parse_encoding("vlad"), ValidationError);
}

TEST_CASE("fused encoding is the concatenation of the two encodings") {
  Rng rng(81);
  const Fixture f = generate_fixture(small_fixture());
  const auto gmm = oracle::random_model(rng, Family::Gmm, 3, 10);
  const auto hyb = oracle::random_model(rng, Family::Hglmm, 3, 10);
  const Matrix fused = encode_with(Encoding::GmmHglmm, f.words, f.sentences, {gmm, hyb}, {});
  CHECK(fused.cols() == 4 * 3 * 10);
  CHECK(fused.rows() == 90);
  const Matrix a = encode_sets(f.words, f.sentences, gmm, {});
  const Matrix b = encode_sets(f.words, f.sentences, hyb, {});
  CHECK(fused.leftCols(60) == a);
  CHECK(fused.rightCols(60) == b);
  CHECK(encode_with(Encoding::Mean, f.words, f.sentences, {}, {}).cols() == 10);
  CHECK_THROWS_AS(encode_with(Encoding::GmmHglmm, f.words, f.sentences, {hyb, gmm}, {}), ValidationError);
  CHECK_THROWS_AS(encode_with(Encoding::Gmm, f.words, f.sentences, {}, {}), ValidationError);
}

TEST_CASE("split restriction") {
  const Fixture f = generate_fixture(small_fixture());
  const Matrix train = rows_in_split(f.words, f.sentences, f.manifest, Split::Train);
  std::size_t want = 0;
  for (std::size_t i = 0; i < f.sentences.size(); ++i)
    if (f.manifest.pairs[i].split == Split::Train) want += f.sentences.entries[i].size();
  CHECK(train.rows() == static_cast<Eigen::Index>(want));
  CHECK(train.row(0) == f.words.row(0));

  const LabeledRows sentences{f.sentences.ids(), Matrix::Zero(90, 2)};
  CHECK(sentences_in_split(sentences, f.manifest, Split::Test).ids.size() == 18);
  CHECK(images_in_split(image_rows(f), f.manifest, Split::Validation).ids.size() == 6);
  const auto views = paired_views(image_rows(f), sentences, f.manifest, Split::Train);
  CHECK(views.images.rows() == 54);
  CHECK(views.sentences.rows() == 54);
  CHECK(views.images.row(3) == f.images.row(1));  // sentence 3 belongs to image 1
}

TEST_CASE("regularization grid and selection") {
  const auto grid = default_reg_grid();
  REQUIRE(grid.size() == 13);
  CHECK(grid.front() == Approx(1e-4));
  CHECK(grid.back() == Approx(1e2));
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] / grid[i - 1] == Approx(std::sqrt(10.0)));

  const Fixture f = generate_fixture(small_fixture());
  const LabeledRows sentences{f.sentences.ids(), mean_pool_sets(f.words, f.sentences)};
  const auto sel = select_cca_regularization(image_rows(f), sentences, f.manifest, grid, TuneTask::Annotation, {}, {});
  CHECK_FALSE(sel.trials.empty());
  double best = -1.0;
  for (const auto& [reg, m] : sel.trials) best = std::max(best, m.recall_at.at(1));
  bool found = false;
  for (const auto& [reg, m] : sel.trials)
    if (reg == sel.reg) {
      found = true;
      CHECK(m.recall_at.at(1) == best);
    }
  CHECK(found);
  CHECK(parse_tune_task("search") == TuneTask::Search);
}

TEST_CASE("pipeline produces metrics and is deterministic") {
  const Fixture f = generate_fixture(small_fixture(2));
  PipelineConfig pc;
  pc.components = 4;
  pc.max_iters = 30;
  pc.seed = 2;
  const auto a = run_pipeline(f, pc), b = run_pipeline(f, pc);
  REQUIRE(a.test.annotation.has_value());
  REQUIRE(a.test.search.has_value());
  REQUIRE(a.test.sentence_mean_rank.has_value());
  for (int k : {1, 5, 10}) {
    CHECK(a.test.annotation->recall_at.at(k) >= 0.0);
    CHECK(a.test.annotation->recall_at.at(k) <= 1.0);
  }
  CHECK(a.sentence_dim == 4 * 4 * 10);
  CHECK(a.test.to_tsv() == b.test.to_tsv());
  CHECK(a.cca_reg == b.cca_reg);

  pc.encoding = Encoding::Mean;
  pc.ica = false;
  pc.cca_reg = 0.01;
  const auto mean = run_pipeline(f, pc);
  CHECK(mean.sentence_dim == 10);
  CHECK(mean.cca_reg == 0.01);
}
