#pragma once

#include "hglmm/matrix_io.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>

namespace hglmm {

/// Synthetic image/sentence corpus. Every image owns a latent vector z; the image
/// feature is a noisy linear view of z, and each of its sentences is a bag of word
/// vectors drawn around topic centres shifted by another linear view of z, with
/// heavy-tailed (Laplace) word noise.
struct FixtureConfig {
  std::size_t images = 100;
  std::size_t sentences_per_image = 5;
  std::size_t train_images = 60;
  std::size_t validation_images = 20;  // the rest are test images
  Eigen::Index latent_dim = 6;
  Eigen::Index image_dim = 16;
  Eigen::Index word_dim = 10;
  Eigen::Index topics = 6;
  std::size_t min_words = 6;
  std::size_t max_words = 10;
  double image_noise = 1.0;
  double word_noise = 2.0;
  std::uint64_t seed = 0;
};

struct Fixture {
  Matrix words;                   // all word vectors, sentence after sentence
  DescriptorSetIndex sentences;   // sentence id -> word rows
  Matrix images;                  // one row per image
  DescriptorSetIndex image_ids;   // row labels for images
  DatasetManifest manifest;
};

Fixture generate_fixture(const FixtureConfig& config);

/// Writes words.fvm, sentences.tsv, images.fvm, images.tsv and manifest.tsv into dir.
void write_fixture(const Fixture& fixture, const std::filesystem::path& dir);

}  // namespace hglmm
