#include "hglmm/retrieval.hpp"

#include "hglmm/cca.hpp"
#include "hglmm/errors.hpp"
#include "hglmm/parallel.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

namespace hglmm {

std::vector<std::size_t> rank_order(const Eigen::Ref<const Vector>& scores) {
  std::vector<std::size_t> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores(static_cast<Eigen::Index>(a)) > scores(static_cast<Eigen::Index>(b));
  });
  return order;
}

Matrix score_matrix(const Matrix& queries, const Matrix& candidates, const Scorer& scorer) {
  if (queries.cols() != candidates.cols()) throw ShapeError("queries and candidates differ in dimension");
  Matrix scores(queries.rows(), candidates.rows());
  parallel_for(static_cast<std::size_t>(queries.rows()), [&](std::size_t begin, std::size_t end) {
    for (auto q = static_cast<Eigen::Index>(begin); q < static_cast<Eigen::Index>(end); ++q) {
      const Vector query = queries.row(q).transpose();
      for (Eigen::Index c = 0; c < candidates.rows(); ++c) scores(q, c) = scorer(query, candidates.row(c).transpose());
    }
  });
  return scores;
}

std::vector<RankingResult> rank(const Matrix& queries, const Matrix& candidates, const Scorer& scorer) {
  const Matrix scores = score_matrix(queries, candidates, scorer);
  std::vector<RankingResult> out(static_cast<std::size_t>(queries.rows()));
  for (std::size_t q = 0; q < out.size(); ++q) {
    out[q].query = q;
    out[q].order = rank_order(scores.row(static_cast<Eigen::Index>(q)).transpose());
  }
  return out;
}

std::size_t first_truth_rank(const std::vector<std::size_t>& order, const std::vector<std::size_t>& truths) {
  for (std::size_t pos = 0; pos < order.size(); ++pos)
    if (std::find(truths.begin(), truths.end(), order[pos]) != truths.end()) return pos + 1;
  throw ValidationError("no ground-truth item among the candidates");
}

TaskMetrics metrics_from_ranks(const std::vector<std::size_t>& ranks) {
  if (ranks.empty()) throw ValidationError("no queries to evaluate");
  TaskMetrics m;
  m.queries = ranks.size();
  const double q = static_cast<double>(ranks.size());
  for (int k : {1, 5, 10})
    m.recall_at[k] =
        static_cast<double>(std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r <= static_cast<std::size_t>(k); })) / q;
  std::vector<std::size_t> sorted = ranks;
  std::sort(sorted.begin(), sorted.end());
  m.median_rank = static_cast<double>(sorted[(sorted.size() - 1) / 2]);
  double total = 0.0;
  for (auto r : ranks) total += static_cast<double>(r);
  m.mean_rank = total / q;
  return m;
}

std::vector<std::size_t> first_truth_ranks(const Matrix& scores, const std::vector<std::vector<std::size_t>>& truths,
                                           bool exclude_self) {
  if (static_cast<std::size_t>(scores.rows()) != truths.size()) throw ShapeError("one truth list per query required");
  std::vector<std::size_t> ranks(truths.size());
  parallel_for(truths.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t q = begin; q < end; ++q) {
      auto order = rank_order(scores.row(static_cast<Eigen::Index>(q)).transpose());
      if (exclude_self) std::erase(order, q);
      ranks[q] = first_truth_rank(order, truths[q]);
    }
  });
  return ranks;
}

double random_recall_at(std::size_t candidates, std::size_t truths, std::size_t k) {
  if (truths == 0 || truths > candidates) throw DomainError("random_recall_at: need 1 <= truths <= candidates");
  if (k >= candidates - truths + 1) return 1.0;
  // P(no truth in the first k) = C(C - t, k) / C(C, k)
  double miss = 1.0;
  for (std::size_t j = 0; j < k; ++j)
    miss *= static_cast<double>(candidates - truths - j) / static_cast<double>(candidates - j);
  return 1.0 - miss;
}

// --- task level -----------------------------------------------------------------

Matrix similarity_scores(const Matrix& queries, const Matrix& candidates, const SimilarityConfig& config) {
  if (queries.cols() != candidates.cols()) throw ShapeError("queries and candidates differ in dimension");
  const Vector corr = config.correlations.size() == 0 ? Vector::Ones(queries.cols()) : config.correlations;
  const Matrix a = similarity_embedding(queries, config.weight_exp, corr);
  const Matrix b = similarity_embedding(candidates, config.weight_exp, corr);
  Matrix scores = a * b.transpose();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    if (a.row(i).isZero(0.0)) scores.row(i).setConstant(kNegInf);
  for (Eigen::Index j = 0; j < b.rows(); ++j)
    if (b.row(j).isZero(0.0)) scores.col(j).setConstant(kNegInf);
  return scores;
}

namespace {

void check_labels(const LabeledRows& rows, const char* what) {
  if (rows.ids.size() != static_cast<std::size_t>(rows.rows.rows()))
    throw ShapeError(std::string(what) + ": id count does not match row count");
}

std::map<std::string, std::size_t, std::less<>> positions(const std::vector<std::string>& ids) {
  std::map<std::string, std::size_t, std::less<>> out;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (!out.emplace(ids[i], i).second) throw ValidationError("duplicate id '" + ids[i] + "'");
  return out;
}

const ManifestEntry& entry_for(const DatasetManifest& manifest,
                               const std::map<std::string, std::size_t, std::less<>>& by_sentence,
                               const std::string& sentence) {
  const auto it = by_sentence.find(sentence);
  if (it == by_sentence.end()) throw ValidationError("sentence '" + sentence + "' is not in the manifest");
  return manifest.pairs[it->second];
}

}  // namespace

TaskMetrics evaluate_annotation(const LabeledRows& images, const LabeledRows& sentences,
                                const DatasetManifest& manifest, const SimilarityConfig& config) {
  check_labels(images, "images");
  check_labels(sentences, "sentences");
  const auto image_pos = positions(images.ids);
  const auto by_sentence = manifest.by_sentence();

  std::vector<std::vector<std::size_t>> truths(images.ids.size());
  for (std::size_t s = 0; s < sentences.ids.size(); ++s) {
    const auto& e = entry_for(manifest, by_sentence, sentences.ids[s]);
    if (const auto it = image_pos.find(e.image_id); it != image_pos.end()) truths[it->second].push_back(s);
  }
  for (std::size_t i = 0; i < truths.size(); ++i)
    if (truths[i].empty()) throw ValidationError("image '" + images.ids[i] + "' has no ground-truth sentence");

  return metrics_from_ranks(first_truth_ranks(similarity_scores(images.rows, sentences.rows, config), truths));
}

TaskMetrics evaluate_search(const LabeledRows& sentences, const LabeledRows& images, const DatasetManifest& manifest,
                            const SimilarityConfig& config) {
  check_labels(images, "images");
  check_labels(sentences, "sentences");
  const auto image_pos = positions(images.ids);
  const auto by_sentence = manifest.by_sentence();

  std::vector<std::vector<std::size_t>> truths(sentences.ids.size());
  for (std::size_t s = 0; s < sentences.ids.size(); ++s) {
    const auto& e = entry_for(manifest, by_sentence, sentences.ids[s]);
    const auto it = image_pos.find(e.image_id);
    if (it == image_pos.end())
      throw ValidationError("image '" + e.image_id + "' of sentence '" + sentences.ids[s] + "' is not a candidate");
    truths[s].push_back(it->second);
  }
  return metrics_from_ranks(first_truth_ranks(similarity_scores(sentences.rows, images.rows, config), truths));
}

double evaluate_sentence_similarity(const LabeledRows& sentences, const DatasetManifest& manifest,
                                    const SimilarityConfig& config) {
  check_labels(sentences, "sentences");
  positions(sentences.ids);
  const auto by_sentence = manifest.by_sentence();

  std::map<std::string, std::vector<std::size_t>, std::less<>> by_image;
  std::vector<const std::string*> image_of(sentences.ids.size());
  for (std::size_t s = 0; s < sentences.ids.size(); ++s) {
    const auto& e = entry_for(manifest, by_sentence, sentences.ids[s]);
    by_image[e.image_id].push_back(s);
    image_of[s] = &e.image_id;
  }

  std::vector<std::size_t> queries;
  std::vector<std::vector<std::size_t>> truths;
  for (std::size_t s = 0; s < sentences.ids.size(); ++s) {
    const auto& group = by_image[*image_of[s]];
    if (group.size() < 2) continue;
    queries.push_back(s);
    auto& t = truths.emplace_back();
    for (auto other : group)
      if (other != s) t.push_back(other);
  }
  if (queries.empty()) throw ValidationError("no sentence has a sibling to retrieve");

  const Matrix all = similarity_scores(sentences.rows, sentences.rows, config);
  Matrix scores(static_cast<Eigen::Index>(queries.size()), all.cols());
  for (std::size_t q = 0; q < queries.size(); ++q)
    scores.row(static_cast<Eigen::Index>(q)) = all.row(static_cast<Eigen::Index>(queries[q]));

  std::vector<std::size_t> ranks(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    auto order = rank_order(scores.row(static_cast<Eigen::Index>(q)).transpose());
    std::erase(order, queries[q]);
    ranks[q] = first_truth_rank(order, truths[q]);
  }
  return metrics_from_ranks(ranks).mean_rank;
}

// --- reporting ------------------------------------------------------------------

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void task_tsv(std::ostringstream& out, const char* task, const TaskMetrics& m) {
  for (const auto& [k, r] : m.recall_at) out << task << "\trecall@" << k << '\t' << fixed(r, 6) << '\n';
  out << task << "\tmedian_rank\t" << fixed(m.median_rank, 6) << '\n';
  out << task << "\tmean_rank\t" << fixed(m.mean_rank, 6) << '\n';
}

}  // namespace

std::string EvaluationReport::to_tsv() const {
  std::ostringstream out;
  if (search) task_tsv(out, "search", *search);
  if (annotation) task_tsv(out, "annotation", *annotation);
  if (sentence_mean_rank) out << "sentence\tmean_rank\t" << fixed(*sentence_mean_rank, 6) << '\n';
  return out.str();
}

std::string EvaluationReport::to_table(const std::string& label) const {
  auto cells = [](const std::optional<TaskMetrics>& m) {
    std::string s;
    char buf[128];
    if (m) {
      std::snprintf(buf, sizeof buf, " %6.1f %6.1f %6.1f %7.1f %7.1f |", 100 * m->recall_at.at(1),
                    100 * m->recall_at.at(5), 100 * m->recall_at.at(10), m->median_rank, m->mean_rank);
    } else {
      std::snprintf(buf, sizeof buf, " %6s %6s %6s %7s %7s |", "NA", "NA", "NA", "NA", "NA");
    }
    s = buf;
    return s;
  };
  char head[512];
  std::snprintf(head, sizeof head,
                "%-12s|%-38s|%-38s| %-8s\n%-12s| %6s %6s %6s %7s %7s | %6s %6s %6s %7s %7s | %8s\n", "",
                " Image search", " Image annotation", "Sentence", "", "r@1", "r@5", "r@10", "median", "mean", "r@1",
                "r@5", "r@10", "median", "mean", "mean");
  std::string out = head;
  char name[64];
  std::snprintf(name, sizeof name, "%-12s|", label.c_str());
  out += name;
  out += cells(search);
  out += cells(annotation);
  char sent[32];
  if (sentence_mean_rank)
    std::snprintf(sent, sizeof sent, " %8.1f\n", *sentence_mean_rank);
  else
    std::snprintf(sent, sizeof sent, " %8s\n", "NA");
  out += sent;
  return out;
}

}  // namespace hglmm
