#pragma once

#include "hglmm/cca.hpp"
#include "hglmm/fisher.hpp"
#include "hglmm/fixture.hpp"
#include "hglmm/mixtures.hpp"
#include "hglmm/retrieval.hpp"
#include "hglmm/whitening.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace hglmm {

/// Sentence representations: one mixture family, GMM and HGLMM vectors concatenated, or the word mean.
enum class Encoding { Gmm, Lmm, Hglmm, GmmHglmm, Mean };

std::string_view to_string(Encoding encoding);
Encoding parse_encoding(std::string_view token);

/// Mixture families an encoding needs, in concatenation order.
std::vector<Family> families_for(Encoding encoding);

/// Encodes every set; models must match families_for(encoding) one to one.
Matrix encode_with(Encoding encoding, const Matrix& words, const DescriptorSetIndex& sets,
                   const std::vector<MixtureModel>& models, const EncodeConfig& config);

/// Word rows of the sentences that belong to `split`, stacked in index order.
Matrix rows_in_split(const Matrix& words, const DescriptorSetIndex& sets, const DatasetManifest& manifest, Split split);

/// Restriction of sentence (or image) rows to one split.
LabeledRows sentences_in_split(const LabeledRows& sentences, const DatasetManifest& manifest, Split split);
LabeledRows images_in_split(const LabeledRows& images, const DatasetManifest& manifest, Split split);

/// One (image row, sentence row) pair per sentence of the split.
struct PairedViews {
  Matrix images;
  Matrix sentences;
};
PairedViews paired_views(const LabeledRows& images, const LabeledRows& sentences, const DatasetManifest& manifest,
                         Split split);

enum class TuneTask { Annotation, Search };
TuneTask parse_tune_task(std::string_view token);

/// 13 log-spaced values from 1e-4 to 1e2.
std::vector<double> default_reg_grid();

struct RegSelection {
  double reg = 0.0;
  std::vector<std::pair<double, TaskMetrics>> trials;  // only values for which the fit succeeded
};

/// Fits CCA on the training pairs for every grid value and keeps the one with the best
/// validation recall@1 on `task` (ties: lower mean rank, then smaller value).
RegSelection select_cca_regularization(const LabeledRows& images, const LabeledRows& sentences,
                                       const DatasetManifest& manifest, const std::vector<double>& grid, TuneTask task,
                                       const CcaConfig& base, const SimilarityConfig& similarity);

/// Projects the split's images and sentences and runs all three tasks on them.
EvaluationReport evaluate_split(const CcaModel& model, const LabeledRows& images, const LabeledRows& sentences,
                                const DatasetManifest& manifest, Split split, double weight_exp);

struct PipelineConfig {
  Encoding encoding = Encoding::GmmHglmm;
  Eigen::Index components = 30;
  double alpha = 0.5;
  bool ica = true;
  std::optional<double> cca_reg;  // nullopt: select on the validation split
  std::uint64_t seed = 0;
  double weight_exp = 0.0;
  int max_iters = 100;
};

struct PipelineResult {
  EvaluationReport test;
  double cca_reg = 0.0;
  Eigen::Index sentence_dim = 0;
};

/// whitening (train words) -> mixture fits (train words) -> encoding -> CCA (train pairs,
/// regularization tuned on validation) -> evaluation on the test split.
PipelineResult run_pipeline(const Fixture& data, const PipelineConfig& config);

}  // namespace hglmm
