#include "hglmm/pipeline.hpp"

#include "hglmm/errors.hpp"

#include <cmath>

namespace hglmm {

std::string_view to_string(Encoding encoding) {
  switch (encoding) {
    case Encoding::Gmm: return "gmm";
    case Encoding::Lmm: return "lmm";
    case Encoding::Hglmm: return "hglmm";
    case Encoding::GmmHglmm: return "gmm+hglmm";
    case Encoding::Mean: return "mean";
  }
  return "?";
}

Encoding parse_encoding(std::string_view token) {
  if (token == "gmm") return Encoding::Gmm;
  if (token == "lmm") return Encoding::Lmm;
  if (token == "hglmm") return Encoding::Hglmm;
  if (token == "gmm+hglmm") return Encoding::GmmHglmm;
  if (token == "mean") return Encoding::Mean;
  throw ValidationError("unknown encoding '" + std::string(token) + "'");
}

std::vector<Family> families_for(Encoding encoding) {
  switch (encoding) {
    case Encoding::Gmm: return {Family::Gmm};
    case Encoding::Lmm: return {Family::Lmm};
    case Encoding::Hglmm: return {Family::Hglmm};
    case Encoding::GmmHglmm: return {Family::Gmm, Family::Hglmm};
    case Encoding::Mean: return {};
  }
  return {};
}

Matrix encode_with(Encoding encoding, const Matrix& words, const DescriptorSetIndex& sets,
                   const std::vector<MixtureModel>& models, const EncodeConfig& config) {
  const auto families = families_for(encoding);
  if (models.size() != families.size())
    throw ValidationError("encoding '" + std::string(to_string(encoding)) + "' needs " +
                          std::to_string(families.size()) + " model(s), got " + std::to_string(models.size()));
  for (std::size_t i = 0; i < models.size(); ++i)
    if (family_of(models[i]) != families[i])
      throw ValidationError("model " + std::to_string(i + 1) + " is " + std::string(to_string(family_of(models[i]))) +
                            ", expected " + std::string(to_string(families[i])));
  if (encoding == Encoding::Mean) return mean_pool_sets(words, sets);

  Matrix out = encode_sets(words, sets, models[0], config);
  for (std::size_t i = 1; i < models.size(); ++i) {
    const Matrix next = encode_sets(words, sets, models[i], config);
    Matrix fused(out.rows(), out.cols() + next.cols());
    for (Eigen::Index r = 0; r < out.rows(); ++r)
      fused.row(r) = fuse_concat(out.row(r).transpose(), next.row(r).transpose()).transpose();
    out = std::move(fused);
  }
  return out;
}

Matrix rows_in_split(const Matrix& words, const DescriptorSetIndex& sets, const DatasetManifest& manifest, Split split) {
  sets.check_bounds(static_cast<std::size_t>(words.rows()));
  const auto by_sentence = manifest.by_sentence();
  std::vector<const SetRange*> chosen;
  Eigen::Index total = 0;
  for (const auto& e : sets.entries) {
    const auto it = by_sentence.find(e.id);
    if (it == by_sentence.end()) throw ValidationError("sentence '" + e.id + "' is not in the manifest");
    if (manifest.pairs[it->second].split != split) continue;
    chosen.push_back(&e);
    total += static_cast<Eigen::Index>(e.size());
  }
  if (total == 0) throw ValidationError("no descriptors in split '" + std::string(to_string(split)) + "'");
  Matrix out(total, words.cols());
  Eigen::Index at = 0;
  for (const auto* e : chosen) {
    const auto len = static_cast<Eigen::Index>(e->size());
    out.middleRows(at, len) = words.middleRows(static_cast<Eigen::Index>(e->begin), len);
    at += len;
  }
  return out;
}

namespace {

template <typename Pred>
LabeledRows filter_rows(const LabeledRows& in, Pred&& keep) {
  std::vector<Eigen::Index> rows;
  LabeledRows out;
  for (std::size_t i = 0; i < in.ids.size(); ++i)
    if (keep(in.ids[i])) {
      rows.push_back(static_cast<Eigen::Index>(i));
      out.ids.push_back(in.ids[i]);
    }
  out.rows = in.rows(rows, Eigen::all);
  return out;
}

}  // namespace

LabeledRows sentences_in_split(const LabeledRows& sentences, const DatasetManifest& manifest, Split split) {
  const auto by_sentence = manifest.by_sentence();
  return filter_rows(sentences, [&](const std::string& id) {
    const auto it = by_sentence.find(id);
    if (it == by_sentence.end()) throw ValidationError("sentence '" + id + "' is not in the manifest");
    return manifest.pairs[it->second].split == split;
  });
}

LabeledRows images_in_split(const LabeledRows& images, const DatasetManifest& manifest, Split split) {
  const auto splits = manifest.image_splits();
  return filter_rows(images, [&](const std::string& id) {
    const auto it = splits.find(id);
    return it != splits.end() && it->second == split;
  });
}

PairedViews paired_views(const LabeledRows& images, const LabeledRows& sentences, const DatasetManifest& manifest,
                         Split split) {
  std::map<std::string, Eigen::Index, std::less<>> image_row;
  for (std::size_t i = 0; i < images.ids.size(); ++i) image_row.emplace(images.ids[i], static_cast<Eigen::Index>(i));
  const auto by_sentence = manifest.by_sentence();

  std::vector<Eigen::Index> img_rows, sen_rows;
  for (std::size_t s = 0; s < sentences.ids.size(); ++s) {
    const auto it = by_sentence.find(sentences.ids[s]);
    if (it == by_sentence.end()) throw ValidationError("sentence '" + sentences.ids[s] + "' is not in the manifest");
    const auto& e = manifest.pairs[it->second];
    if (e.split != split) continue;
    const auto img = image_row.find(e.image_id);
    if (img == image_row.end()) throw ValidationError("image '" + e.image_id + "' has no feature row");
    img_rows.push_back(img->second);
    sen_rows.push_back(static_cast<Eigen::Index>(s));
  }
  if (sen_rows.empty()) throw ValidationError("no pairs in split '" + std::string(to_string(split)) + "'");
  return {images.rows(img_rows, Eigen::all), sentences.rows(sen_rows, Eigen::all)};
}

TuneTask parse_tune_task(std::string_view token) {
  if (token == "annotation") return TuneTask::Annotation;
  if (token == "search") return TuneTask::Search;
  throw ValidationError("unknown tuning task '" + std::string(token) + "'");
}

std::vector<double> default_reg_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 12; ++i) grid.push_back(std::pow(10.0, -4.0 + 0.5 * i));
  return grid;
}

namespace {

LabeledRows project_rows(const CcaModel& model, Side side, const LabeledRows& in) {
  return {in.ids, project(model, side, in.rows)};
}

}  // namespace

RegSelection select_cca_regularization(const LabeledRows& images, const LabeledRows& sentences,
                                       const DatasetManifest& manifest, const std::vector<double>& grid, TuneTask task,
                                       const CcaConfig& base, const SimilarityConfig& similarity) {
  if (grid.empty()) throw ValidationError("empty regularization grid");
  const auto train = paired_views(images, sentences, manifest, Split::Train);
  const auto val_images = images_in_split(images, manifest, Split::Validation);
  const auto val_sentences = sentences_in_split(sentences, manifest, Split::Validation);
  if (val_images.ids.empty() || val_sentences.ids.empty()) throw ValidationError("validation split is empty");

  RegSelection sel;
  std::optional<std::size_t> best;
  for (double reg : grid) {
    CcaConfig cfg = base;
    cfg.reg = reg;
    CcaModel model;
    try {
      model = cca_fit(train.images, train.sentences, cfg);
    } catch (const NumericalError&) {
      continue;
    }
    const auto imgs = project_rows(model, Side::X, val_images);
    const auto sens = project_rows(model, Side::Y, val_sentences);
    SimilarityConfig sim = similarity;
    sim.correlations = model.correlations;
    sel.trials.emplace_back(reg, task == TuneTask::Annotation ? evaluate_annotation(imgs, sens, manifest, sim)
                                                              : evaluate_search(sens, imgs, manifest, sim));
    const TaskMetrics& cur = sel.trials.back().second;
    if (best) {
      const TaskMetrics& top = sel.trials[*best].second;
      const bool better = cur.recall_at.at(1) > top.recall_at.at(1) ||
                          (cur.recall_at.at(1) == top.recall_at.at(1) && cur.mean_rank < top.mean_rank);
      if (!better) continue;
    }
    best = sel.trials.size() - 1;
    sel.reg = reg;
  }
  if (sel.trials.empty()) throw NumericalError("CCA failed for every regularization value");
  return sel;
}

EvaluationReport evaluate_split(const CcaModel& model, const LabeledRows& images, const LabeledRows& sentences,
                                const DatasetManifest& manifest, Split split, double weight_exp) {
  const auto imgs = project_rows(model, Side::X, images_in_split(images, manifest, split));
  const auto sens = project_rows(model, Side::Y, sentences_in_split(sentences, manifest, split));
  const SimilarityConfig sim{weight_exp, model.correlations};
  EvaluationReport report;
  report.search = evaluate_search(sens, imgs, manifest, sim);
  report.annotation = evaluate_annotation(imgs, sens, manifest, sim);
  report.sentence_mean_rank = evaluate_sentence_similarity(sens, manifest, sim);
  return report;
}

PipelineResult run_pipeline(const Fixture& data, const PipelineConfig& config) {
  Matrix words = data.words;
  if (config.ica) {
    const Matrix train_words = rows_in_split(words, data.sentences, data.manifest, Split::Train);
    const auto ica = ica_fit(train_words, train_words.cols(), {config.seed, 500, 1e-6});
    words = apply(ica.transform, words);
  }

  std::vector<MixtureModel> models;
  if (config.encoding != Encoding::Mean) {
    const Matrix train_words = rows_in_split(words, data.sentences, data.manifest, Split::Train);
    FitConfig fit;
    fit.components = config.components;
    fit.seed = config.seed;
    fit.max_iters = config.max_iters;
    for (Family f : families_for(config.encoding)) models.push_back(fit_em(train_words, fit, f).model);
  }
  const EncodeConfig enc{config.alpha, true, true};
  const LabeledRows sentences{data.sentences.ids(), encode_with(config.encoding, words, data.sentences, models, enc)};
  const LabeledRows images{data.image_ids.ids(), data.images};

  PipelineResult result;
  result.sentence_dim = sentences.rows.cols();
  if (config.cca_reg) {
    result.cca_reg = *config.cca_reg;
  } else {
    result.cca_reg = select_cca_regularization(images, sentences, data.manifest, default_reg_grid(),
                                               TuneTask::Annotation, {}, {config.weight_exp, {}})
                         .reg;
  }
  const auto train = paired_views(images, sentences, data.manifest, Split::Train);
  CcaConfig cca_cfg;
  cca_cfg.reg = result.cca_reg;
  const CcaModel model = cca_fit(train.images, train.sentences, cca_cfg);
  result.test = evaluate_split(model, images, sentences, data.manifest, Split::Test, config.weight_exp);
  return result;
}

}  // namespace hglmm
