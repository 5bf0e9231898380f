#pragma once

#include "hglmm/matrix_io.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hglmm {

using Scorer = std::function<double(const Vector& query, const Vector& candidate)>;

struct RankingResult {
  std::size_t query = 0;
  std::vector<std::size_t> order;       // candidate indices, best first
  std::size_t rank_of_first_truth = 0;  // 1-based; 0 until truths are known
};

struct TaskMetrics {
  std::map<int, double> recall_at;  // keys 1, 5, 10
  double median_rank = 0.0;         // lower median
  double mean_rank = 0.0;
  std::size_t queries = 0;
};

/// Candidate indices sorted by descending score; equal scores keep ascending index order.
std::vector<std::size_t> rank_order(const Eigen::Ref<const Vector>& scores);

/// scores(q, c) = scorer(queries.row(q), candidates.row(c))
Matrix score_matrix(const Matrix& queries, const Matrix& candidates, const Scorer& scorer);

std::vector<RankingResult> rank(const Matrix& queries, const Matrix& candidates, const Scorer& scorer);

/// 1-based position of the first candidate that is a truth. Throws if none is present.
std::size_t first_truth_rank(const std::vector<std::size_t>& order, const std::vector<std::size_t>& truths);

TaskMetrics metrics_from_ranks(const std::vector<std::size_t>& ranks);

/// Ranks each row of a (queries x candidates) score matrix and reports, per query, the rank
/// of its best-placed truth. If exclude_self is set, query q never sees candidate q.
std::vector<std::size_t> first_truth_ranks(const Matrix& scores, const std::vector<std::vector<std::size_t>>& truths,
                                           bool exclude_self = false);

/// Expected recall@k of a uniformly random ranking of `candidates` items of which `truths` are relevant.
double random_recall_at(std::size_t candidates, std::size_t truths, std::size_t k);

// ---------------------------------------------------------------------------
// Task-level evaluation over id-labelled projections
// ---------------------------------------------------------------------------

struct LabeledRows {
  std::vector<std::string> ids;
  Matrix rows;
};

struct SimilarityConfig {
  double weight_exp = 0.0;
  Vector correlations;  // needed when weight_exp > 0; empty means all ones
};

/// Cosine scores under the correlation weighting; zero rows score -infinity.
Matrix similarity_scores(const Matrix& queries, const Matrix& candidates, const SimilarityConfig& config);

/// Image -> sentences. The first truth is the best-ranked of the image's sentences.
TaskMetrics evaluate_annotation(const LabeledRows& images, const LabeledRows& sentences,
                                const DatasetManifest& manifest, const SimilarityConfig& config = {});

/// Sentence -> images, one truth per query.
TaskMetrics evaluate_search(const LabeledRows& sentences, const LabeledRows& images, const DatasetManifest& manifest,
                            const SimilarityConfig& config = {});

/// Sentence -> the other sentences of the same image, the query itself excluded.
/// Queries without a sibling among the given sentences are skipped.
double evaluate_sentence_similarity(const LabeledRows& sentences, const DatasetManifest& manifest,
                                    const SimilarityConfig& config = {});

struct EvaluationReport {
  std::optional<TaskMetrics> search;
  std::optional<TaskMetrics> annotation;
  std::optional<double> sentence_mean_rank;

  /// task \t metric \t value lines.
  std::string to_tsv() const;
  /// Search / annotation / sentence columns, recalls as percentages.
  std::string to_table(const std::string& label) const;
};

}  // namespace hglmm
