#include "hglmm/cli.hpp"

#include "hglmm/errors.hpp"
#include "hglmm/parallel.hpp"
#include "hglmm/pipeline.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <ostream>

namespace hglmm {

namespace {

using Path = std::string;

LabeledRows load_labeled(const Path& matrix, const Path& ids) {
  LabeledRows out;
  out.rows = load_matrix(matrix);
  const auto index = load_set_index(ids);
  if (!index.is_row_labels())
    throw ValidationError("'" + ids + "' must label rows one by one (entry i covering row i)");
  if (index.size() != static_cast<std::size_t>(out.rows.rows()))
    throw ShapeError("'" + ids + "' has " + std::to_string(index.size()) + " ids but '" + matrix + "' has " +
                     std::to_string(out.rows.rows()) + " rows");
  out.ids = index.ids();
  return out;
}

double parse_real(const std::string& text, const char* what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw ValidationError(std::string(what) + ": expected a number, got '" + text + "'");
  return v;
}

Split parse_split_arg(const std::string& s) { return parse_split(s); }

// --- whiten -----------------------------------------------------------------------

struct WhitenArgs {
  bool fit = false, apply = false;
  std::string kind = "ica";
  Path in, out, transform, sets, manifest;
  std::string split = "train";
  long dims = 0;
  std::uint64_t seed = 0;
  int max_iters = 500;
  double tol = 1e-6;
};

int cmd_whiten(const WhitenArgs& a, std::ostream& out, std::ostream& err) {
  if (a.apply) {
    if (a.transform.empty()) throw ValidationError("--apply needs --transform");
    save_matrix(apply(load_transform(a.transform), load_matrix(a.in)), a.out);
    return kExitOk;
  }
  Matrix X = load_matrix(a.in);
  if (!a.sets.empty() || !a.manifest.empty()) {
    if (a.sets.empty() || a.manifest.empty()) throw ValidationError("--sets and --manifest go together");
    X = rows_in_split(X, load_set_index(a.sets), load_manifest(a.manifest), parse_split_arg(a.split));
  }
  const Eigen::Index dims = a.dims > 0 ? a.dims : X.cols();
  if (parse_transform_kind(a.kind) == TransformKind::Pca) {
    const auto t = pca_fit(X, dims);
    save_transform(t, a.out);
    out << "whiten: kind=pca D_in=" << t.in_dim() << " D_out=" << t.out_dim() << '\n';
    return kExitOk;
  }
  const auto r = ica_fit(X, dims, {a.seed, a.max_iters, a.tol});
  save_transform(r.transform, a.out);
  if (!r.converged) err << "warning: ICA did not converge in " << r.iterations << " iterations\n";
  out << "whiten: kind=ica D_in=" << r.transform.in_dim() << " D_out=" << r.transform.out_dim()
      << " iterations=" << r.iterations << " converged=" << (r.converged ? "yes" : "no") << '\n';
  return kExitOk;
}

// --- fit ----------------------------------------------------------------------------

struct FitArgs {
  std::string family;
  long k = 30;
  Path in, out, sets, manifest;
  std::string split = "train";
  std::uint64_t seed = 0;
  int max_iters = 100;
  double rel_tol = 1e-6;
  double scale_floor = 1e-6;
  int restarts = 1;
};

int cmd_fit(const FitArgs& a, std::ostream& out) {
  Matrix X = load_matrix(a.in);
  if (!a.sets.empty() || !a.manifest.empty()) {
    if (a.sets.empty() || a.manifest.empty()) throw ValidationError("--sets and --manifest go together");
    X = rows_in_split(X, load_set_index(a.sets), load_manifest(a.manifest), parse_split_arg(a.split));
  }
  FitConfig cfg;
  cfg.components = a.k;
  cfg.seed = a.seed;
  cfg.max_iters = a.max_iters;
  cfg.rel_tol = a.rel_tol;
  cfg.scale_floor = a.scale_floor;
  cfg.restarts = a.restarts;
  const auto family = parse_family(a.family);
  const auto result = fit_em(X, cfg, family);
  save_model(result.model, a.out);
  char ll[64];
  std::snprintf(ll, sizeof ll, "%.6f", result.report.log_likelihood_trace.back());
  out << "fit: family=" << to_string(family) << " K=" << cfg.components << " D=" << X.cols()
      << " iterations=" << result.report.iterations_run << " converged=" << (result.report.converged ? "yes" : "no")
      << " loglik=" << ll << '\n';
  return kExitOk;
}

// --- encode -------------------------------------------------------------------------

struct EncodeArgs {
  std::string family;
  std::vector<Path> models;
  Path in, sets, out, out_ids;
  double alpha = 0.5;
  bool no_fim = false, no_l2 = false;
};

int cmd_encode(const EncodeArgs& a) {
  const auto encoding = parse_encoding(a.family);
  std::vector<MixtureModel> models;
  for (const auto& m : a.models) models.push_back(load_model(m));
  const auto sets = load_set_index(a.sets);
  const Matrix encoded = encode_with(encoding, load_matrix(a.in), sets, models, {a.alpha, !a.no_fim, !a.no_l2});
  save_matrix(encoded, a.out);
  if (!a.out_ids.empty()) save_set_index(row_labels(sets.ids()), a.out_ids);
  return kExitOk;
}

// --- cca ----------------------------------------------------------------------------

struct CcaArgs {
  bool fit = false, project = false;
  Path images, image_ids, sentences, sentence_ids, manifest, out, model, in;
  std::string reg = "auto";
  std::optional<double> reg_x, reg_y;
  long dims = 0;
  std::string tune_task = "annotation";
  double weight_exp = 0.0;
  std::string side;
};

int cmd_cca(const CcaArgs& a, std::ostream& out) {
  if (a.project) {
    if (a.model.empty() || a.side.empty()) throw ValidationError("--project needs --model and --side");
    Side side;
    if (a.side == "x" || a.side == "image")
      side = Side::X;
    else if (a.side == "y" || a.side == "sentence")
      side = Side::Y;
    else
      throw ValidationError("--side must be x, y, image or sentence");
    save_matrix(project(load_cca(a.model), side, load_matrix(a.in)), a.out);
    return kExitOk;
  }
  const auto images = load_labeled(a.images, a.image_ids);
  const auto sentences = load_labeled(a.sentences, a.sentence_ids);
  const auto manifest = load_manifest(a.manifest);

  CcaConfig cfg;
  cfg.reg_x = a.reg_x;
  cfg.reg_y = a.reg_y;
  cfg.dims = a.dims;
  if (a.reg == "auto") {
    const auto sel = select_cca_regularization(images, sentences, manifest, default_reg_grid(),
                                               parse_tune_task(a.tune_task), cfg, {a.weight_exp, {}});
    cfg.reg = sel.reg;
  } else {
    cfg.reg = parse_real(a.reg, "--reg");
  }
  const auto train = paired_views(images, sentences, manifest, Split::Train);
  const auto model = cca_fit(train.images, train.sentences, cfg);
  save_cca(model, a.out);
  char reg[32];
  std::snprintf(reg, sizeof reg, "%g", cfg.reg);
  out << "cca: reg=" << reg << " p=" << model.proj_x.cols() << " q=" << model.proj_y.cols() << " r=" << model.dims()
      << '\n';
  return kExitOk;
}

// --- eval ---------------------------------------------------------------------------

struct EvalArgs {
  std::string task = "all";
  Path images, image_ids, sentences, sentence_ids, manifest, cca, out;
  std::string split = "test";
  double weight_exp = 0.0;
  bool table = false;
  std::string label = "model";
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (a.task != "all" && a.task != "annotation" && a.task != "search" && a.task != "sentence")
    throw ValidationError("--task must be annotation, search, sentence or all");
  const auto manifest = load_manifest(a.manifest);
  const Split split = parse_split_arg(a.split);
  SimilarityConfig sim{a.weight_exp, {}};
  if (a.weight_exp > 0.0) {
    if (a.cca.empty()) throw ValidationError("--weight-exp > 0 needs --cca for the correlations");
    sim.correlations = load_cca(a.cca).correlations;
  }

  const auto sentences = sentences_in_split(load_labeled(a.sentences, a.sentence_ids), manifest, split);
  EvaluationReport report;
  if (a.task != "sentence") {
    if (a.images.empty() || a.image_ids.empty()) throw ValidationError("--images and --image-ids are required");
    const auto images = images_in_split(load_labeled(a.images, a.image_ids), manifest, split);
    if (a.task == "all" || a.task == "search") report.search = evaluate_search(sentences, images, manifest, sim);
    if (a.task == "all" || a.task == "annotation")
      report.annotation = evaluate_annotation(images, sentences, manifest, sim);
  }
  if (a.task == "all" || a.task == "sentence")
    report.sentence_mean_rank = evaluate_sentence_similarity(sentences, manifest, sim);

  if (a.out.empty()) {
    out << report.to_tsv();
  } else {
    std::ofstream f(a.out, std::ios::trunc);
    if (!f) throw FormatError("cannot write '" + a.out + "'");
    f << report.to_tsv();
  }
  if (a.table) out << report.to_table(a.label);
  return kExitOk;
}

// --- gen-fixture ----------------------------------------------------------------------

struct FixtureArgs {
  Path out_dir;
  FixtureConfig cfg;
};

// --- config file ------------------------------------------------------------------------

/// Reads `key<TAB>value` lines and splices them in as `--key value` right after the
/// subcommand name, so explicit flags (which come later) win.
std::vector<std::string> splice_config(std::vector<std::string> args, CLI::App& app) {
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].starts_with("--config=")) config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;

  std::size_t sub_pos = args.size();
  CLI::App* sub = nullptr;
  for (std::size_t i = 0; i < args.size() && !sub; ++i) {
    for (auto* candidate : app.get_subcommands([](const CLI::App*) { return true; }))
      if (candidate->get_name() == args[i]) {
        sub = candidate;
        sub_pos = i;
        break;
      }
  }
  if (!sub) return args;

  std::ifstream in(config_path);
  if (!in) throw FormatError("cannot open config '" + config_path + "'");
  std::vector<std::string> injected;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    const std::string key = line.substr(0, tab);
    const std::string value = tab == std::string::npos ? "true" : line.substr(tab + 1);
    const std::string flag = "--" + key;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (opt != nullptr && opt->get_expected_min() == 0) {
      if (value == "true" || value == "1" || value == "yes" || value == "on") injected.push_back(flag);
      continue;
    }
    injected.push_back(flag);
    injected.push_back(value);
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1, injected.begin(), injected.end());
  return args;
}

int exit_code_for(ErrorKind kind) { return static_cast<int>(kind); }

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mixture-model Fisher vectors and CCA retrieval", "hglmm"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  unsigned threads = 1;
  std::string config;
  app.add_option("--threads", threads, "Worker threads (0 = all cores); results do not depend on it")
      ->envname("HGLMM_THREADS")
      ->capture_default_str();
  app.add_option("--config", config, "TSV file of key<TAB>value defaults; explicit flags override");

  std::function<int()> action;

  // whiten
  WhitenArgs wa;
  auto* whiten = app.add_subcommand("whiten", "Fit or apply a PCA/ICA transform");
  auto* wfit = whiten->add_flag("--fit", wa.fit, "Fit a transform on --in and write it to --out");
  auto* wapply = whiten->add_flag("--apply", wa.apply, "Apply --transform to --in and write the result to --out");
  wfit->excludes(wapply);
  whiten->add_option("--kind", wa.kind, "pca or ica")->capture_default_str();
  whiten->add_option("--in", wa.in, "Input FVM1 matrix")->required();
  whiten->add_option("--out", wa.out, "Output transform (fit) or matrix (apply)")->required();
  whiten->add_option("--transform", wa.transform, "Transform file (apply)");
  whiten->add_option("--dims", wa.dims, "Output dimension (0 = input dimension)")->capture_default_str();
  whiten->add_option("--sets", wa.sets, "Set index; with --manifest restricts fitting to --split");
  whiten->add_option("--manifest", wa.manifest, "Dataset manifest");
  whiten->add_option("--split", wa.split, "Split used for fitting")->capture_default_str();
  whiten->add_option("--seed", wa.seed, "ICA seed")->capture_default_str();
  whiten->add_option("--max-iters", wa.max_iters, "ICA iteration cap")->capture_default_str();
  whiten->add_option("--tol", wa.tol, "ICA convergence tolerance")->capture_default_str();
  whiten->callback([&] {
    if (!wa.fit && !wa.apply) throw CLI::ValidationError("whiten", "one of --fit or --apply is required");
    action = [&] { return cmd_whiten(wa, out, err); };
  });

  // fit
  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit a mixture model with EM");
  fit->add_option("--family", fa.family, "gmm, lmm or hglmm")->required();
  fit->add_option("--k", fa.k, "Number of components")->capture_default_str();
  fit->add_option("--in", fa.in, "Descriptor matrix (FVM1)")->required();
  fit->add_option("--out", fa.out, "Output model file")->required();
  fit->add_option("--sets", fa.sets, "Set index; with --manifest restricts fitting to --split");
  fit->add_option("--manifest", fa.manifest, "Dataset manifest");
  fit->add_option("--split", fa.split, "Split used for fitting")->capture_default_str();
  fit->add_option("--seed", fa.seed, "Initialization seed")->capture_default_str();
  fit->add_option("--max-iters", fa.max_iters, "EM iteration cap")->capture_default_str();
  fit->add_option("--rel-tol", fa.rel_tol, "Relative log-likelihood gain that stops EM")->capture_default_str();
  fit->add_option("--scale-floor", fa.scale_floor, "Lower bound on sigma and s")->capture_default_str();
  fit->add_option("--restarts", fa.restarts, "Independent EM runs; the best likelihood is kept")->capture_default_str();
  fit->callback([&] { action = [&] { return cmd_fit(fa, out); }; });

  // encode
  EncodeArgs ea;
  auto* encode_cmd = app.add_subcommand("encode", "Encode descriptor sets as Fisher vectors or means");
  encode_cmd->add_option("--family", ea.family, "gmm, lmm, hglmm, gmm+hglmm or mean")->required();
  encode_cmd->add_option("--model", ea.models, "Model file; give gmm then hglmm for gmm+hglmm")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  encode_cmd->add_option("--in", ea.in, "Descriptor matrix (FVM1)")->required();
  encode_cmd->add_option("--sets", ea.sets, "Set index")->required();
  encode_cmd->add_option("--out", ea.out, "Output matrix, one row per set")->required();
  encode_cmd->add_option("--out-ids", ea.out_ids, "Row labels for the output");
  encode_cmd->add_option("--alpha", ea.alpha, "Power normalization exponent")->capture_default_str();
  encode_cmd->add_flag("--no-fim", ea.no_fim, "Skip Fisher information scaling");
  encode_cmd->add_flag("--no-l2", ea.no_l2, "Skip L2 normalization");
  encode_cmd->callback([&] { action = [&] { return cmd_encode(ea); }; });

  // cca
  CcaArgs ca;
  auto* cca_cmd = app.add_subcommand("cca", "Fit a regularized CCA or project with one");
  auto* cfit = cca_cmd->add_flag("--fit", ca.fit, "Fit on the training pairs");
  auto* cproj = cca_cmd->add_flag("--project", ca.project, "Project --in with --model");
  cfit->excludes(cproj);
  cca_cmd->add_option("--images", ca.images, "Image feature matrix");
  cca_cmd->add_option("--image-ids", ca.image_ids, "Image row labels");
  cca_cmd->add_option("--sentences", ca.sentences, "Sentence vectors");
  cca_cmd->add_option("--sentence-ids", ca.sentence_ids, "Sentence row labels");
  cca_cmd->add_option("--manifest", ca.manifest, "Dataset manifest");
  cca_cmd->add_option("--reg", ca.reg, "Ridge value or 'auto' (validation grid search)")->capture_default_str();
  cca_cmd->add_option("--reg-x", ca.reg_x, "Image-side ridge override");
  cca_cmd->add_option("--reg-y", ca.reg_y, "Sentence-side ridge override");
  cca_cmd->add_option("--dims", ca.dims, "Output dimension (0 = min(p, q, n-1))")->capture_default_str();
  cca_cmd->add_option("--tune-task", ca.tune_task, "annotation or search")->capture_default_str();
  cca_cmd->add_option("--weight-exp", ca.weight_exp, "Correlation weighting used while tuning")->capture_default_str();
  cca_cmd->add_option("--model", ca.model, "CCA model (project)");
  cca_cmd->add_option("--side", ca.side, "x|image or y|sentence (project)");
  cca_cmd->add_option("--in", ca.in, "Matrix to project");
  cca_cmd->add_option("--out", ca.out, "Output model (fit) or matrix (project)")->required();
  cca_cmd->callback([&] {
    if (!ca.fit && !ca.project) throw CLI::ValidationError("cca", "one of --fit or --project is required");
    if (ca.fit && (ca.images.empty() || ca.image_ids.empty() || ca.sentences.empty() || ca.sentence_ids.empty() ||
                   ca.manifest.empty()))
      throw CLI::ValidationError("cca", "--fit needs --images, --image-ids, --sentences, --sentence-ids, --manifest");
    if (ca.project && ca.in.empty()) throw CLI::ValidationError("cca", "--project needs --in");
    action = [&] { return cmd_cca(ca, out); };
  });

  // eval
  EvalArgs va;
  auto* eval_cmd = app.add_subcommand("eval", "Annotation, search and sentence-similarity metrics");
  eval_cmd->add_option("--task", va.task, "annotation, search, sentence or all")->capture_default_str();
  eval_cmd->add_option("--images", va.images, "Projected images");
  eval_cmd->add_option("--image-ids", va.image_ids, "Image row labels");
  eval_cmd->add_option("--sentences", va.sentences, "Projected sentences")->required();
  eval_cmd->add_option("--sentence-ids", va.sentence_ids, "Sentence row labels")->required();
  eval_cmd->add_option("--manifest", va.manifest, "Dataset manifest")->required();
  eval_cmd->add_option("--split", va.split, "Split to evaluate")->capture_default_str();
  eval_cmd->add_option("--weight-exp", va.weight_exp, "Correlation weighting exponent")->capture_default_str();
  eval_cmd->add_option("--cca", va.cca, "CCA model supplying correlations");
  eval_cmd->add_option("--out", va.out, "Metrics TSV (stdout when omitted)");
  eval_cmd->add_flag("--table", va.table, "Also print a results table");
  eval_cmd->add_option("--label", va.label, "Row label for --table")->capture_default_str();
  eval_cmd->callback([&] { action = [&] { return cmd_eval(va, out); }; });

  // gen-fixture
  FixtureArgs ga;
  auto* gen = app.add_subcommand("gen-fixture", "Write the synthetic image/sentence corpus");
  gen->add_option("--out-dir", ga.out_dir, "Output directory")->required();
  gen->add_option("--images", ga.cfg.images, "Number of images")->capture_default_str();
  gen->add_option("--sentences-per-image", ga.cfg.sentences_per_image, "Sentences per image")->capture_default_str();
  gen->add_option("--train-images", ga.cfg.train_images, "Training images")->capture_default_str();
  gen->add_option("--validation-images", ga.cfg.validation_images, "Validation images")->capture_default_str();
  gen->add_option("--latent-dim", ga.cfg.latent_dim, "Shared latent dimension")->capture_default_str();
  gen->add_option("--image-dim", ga.cfg.image_dim, "Image feature dimension")->capture_default_str();
  gen->add_option("--word-dim", ga.cfg.word_dim, "Word vector dimension")->capture_default_str();
  gen->add_option("--image-noise", ga.cfg.image_noise, "Gaussian noise on image features")->capture_default_str();
  gen->add_option("--word-noise", ga.cfg.word_noise, "Laplace noise scale on word vectors")->capture_default_str();
  gen->add_option("--seed", ga.cfg.seed, "Generator seed")->capture_default_str();
  gen->callback([&] {
    action = [&] {
      write_fixture(generate_fixture(ga.cfg), ga.out_dir);
      return static_cast<int>(kExitOk);
    };
  });

  try {
    std::vector<std::string> args = splice_config(raw_args, app);
    std::vector<std::string> storage;
    storage.reserve(args.size() + 1);
    storage.push_back("hglmm");
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      // --help inside a subcommand surfaces here with the subcommand's help text
      if (e.get_exit_code() == 0) {
        app.exit(e, out, err);
        return kExitOk;
      }
      err << "error: " << e.what() << '\n';
      return kExitUsage;
    }
    set_thread_count(threads);
    return action();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace hglmm
