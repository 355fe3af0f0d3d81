#include "neurostage/neurostage.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace neurostage;

namespace {

// Raised for bad invocations that CLI11 cannot see (missing config, etc.).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config = "default";
  std::optional<std::uint64_t> seed;
  std::string out = "neurostage_out";
};

struct DataFlags {
  std::string data, features, split;
  std::vector<std::string> subjects;
  bool no_zscore = false;
  bool things_eeg = false;
};

void add_data_flags(CLI::App* sub, DataFlags& d, bool many_subjects) {
  sub->add_option("--data", d.data, "directory of subject folders");
  sub->add_option("--features", d.features, "feature cache directory");
  if (many_subjects)
    sub->add_option("--subjects", d.subjects, "subject ids")->delimiter(',');
  else
    sub->add_option("--subject", d.subjects, "target subject id")->expected(1);
  sub->add_option("--split", d.split, "dependent | independent");
  sub->add_flag("--no-zscore", d.no_zscore, "disable per-channel standardization");
  sub->add_flag("--things-eeg", d.things_eeg, "enforce the full benchmark sample counts");
}

ExperimentConfig load_config(const Globals& g) {
  try {
    return load_experiment_config(g.config);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

void apply(ExperimentConfig& c, const DataFlags& d, const Globals& g) {
  if (!d.data.empty()) c.data.root = d.data;
  if (!d.features.empty()) c.data.features = d.features;
  if (!d.split.empty()) c.data.split = d.split;
  if (!d.subjects.empty()) c.data.subjects = d.subjects;
  if (d.no_zscore) c.data.zscore = false;
  if (d.things_eeg) c.data.things_eeg_counts = true;
  if (g.seed) c.train.seed = *g.seed;
}

LoadOptions load_options(const ExperimentConfig& c) {
  if (c.data.things_eeg_counts) return LoadOptions::things_eeg();
  LoadOptions lo;
  lo.timesteps = c.model.n_timesteps;
  return lo;
}

std::string target_subject(const ExperimentConfig& c) {
  if (c.data.subjects.empty()) throw UsageError("no subject given (--subject or data.subjects)");
  return c.data.subjects.front();
}

/// Loads what a split for `target` needs: the target alone (dependent) or
/// every subject folder under the data root (independent).
Split build_split(const ExperimentConfig& c, const std::string& target) {
  const SplitMode mode = split_mode_from_string(c.data.split);
  const LoadOptions lo = load_options(c);
  std::vector<SubjectDataset> subjects;
  if (mode == SplitMode::dependent) {
    subjects.push_back(load_subject(c.data.root, target, lo));
  } else {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(c.data.root))
      if (e.is_directory() && fs::exists(e.path() / "ids.json")) names.push_back(e.path().filename());
    std::sort(names.begin(), names.end());
    for (const auto& n : names) subjects.push_back(load_subject(c.data.root, n, lo));
  }
  return make_split(subjects, mode, target, c.data.zscore);
}

void print_report(const RetrievalReport& r) {
  std::cout << r.protocol << " stage " << r.stage << " (" << r.match << ", " << r.n_queries
            << " queries):";
  for (std::size_t i = 0; i < r.ks.size(); ++i)
    std::cout << "  top-" << r.ks[i] << " " << r.accuracy[0][i] << "%";
  std::cout << "\n";
}

struct Loaded {
  Checkpoint ck;
  ParamSet<float> ps;
  StagedModel model;
};

Loaded load_model(const std::string& path) {
  Loaded l;
  l.ck = load_checkpoint(path);
  l.model = restore_model(l.ck, l.ps);
  return l;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Staged EEG visual decoding: training, evaluation and ablations"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "JSON config file, or 'default'");
  app.add_option("--seed", g.seed, "random seed (overrides the config)");
  app.add_option("--out", g.out, "output directory");

  // extract-features
  auto* ex = app.add_subcommand("extract-features", "run the frozen backbone over an image set");
  std::string images, labels, backbone_cmd, prompt = "{}";
  ex->add_option("--images", images, "image directory")->required();
  ex->add_option("--labels", labels, "TSV: stimulus_id, class_id, path, label")->required();
  ex->add_option("--prompt", prompt, "text prompt template, {} = label");
  ex->add_option("--backbone-cmd", backbone_cmd, "extractor command");

  // synth-data
  auto* sy = app.add_subcommand("synth-data", "write a synthetic corpus and feature cache");
  SyntheticSpec spec;
  Index n_subjects = 1;
  bool no_late = false, no_early = false;
  sy->add_option("--classes", spec.n_classes, "number of classes");
  sy->add_option("--images", spec.images_per_class, "images per class");
  sy->add_option("--reps", spec.reps, "training repetitions per image");
  sy->add_option("--test-reps", spec.test_reps, "repetitions of each test image");
  sy->add_option("--heldout", spec.n_heldout, "held-out (zero-shot) classes");
  sy->add_option("--timesteps", spec.timesteps, "samples per trial");
  sy->add_option("--noise", spec.noise_sd, "noise standard deviation");
  sy->add_option("--subjects", n_subjects, "number of synthetic subjects");
  sy->add_flag("--no-late", no_late, "omit the late (semantic) plant");
  sy->add_flag("--no-early", no_early, "omit the early (low-level) plant");

  // train
  auto* tr = app.add_subcommand("train", "train one model on one subject");
  DataFlags tr_d;
  add_data_flags(tr, tr_d, false);
  std::string variant = "Ours-All";
  std::optional<Index> epochs, batch;
  std::optional<double> lr;
  tr->add_option("--variant", variant, "ablation variant");
  tr->add_option("--epochs", epochs, "epochs");
  tr->add_option("--batch", batch, "batch size");
  tr->add_option("--lr", lr, "learning rate");

  // eval
  auto* ev = app.add_subcommand("eval", "standard and coarse-text retrieval of a checkpoint");
  DataFlags ev_d;
  add_data_flags(ev, ev_d, false);
  std::string ckpt;
  std::vector<std::string> stages;
  std::vector<int> ks;
  ev->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  ev->add_option("--stages", stages, "I, II_fine, III")->delimiter(',');
  ev->add_option("--ks", ks, "top-k values")->delimiter(',');

  // ablate
  auto* ab = app.add_subcommand("ablate", "run a variant x subject x seed plan");
  DataFlags ab_d;
  add_data_flags(ab, ab_d, true);
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> protocols;
  bool force = false;
  ab->add_option("--variants", variants, "variants (default: all eight)")->delimiter(',');
  ab->add_option("--seeds", seeds, "seeds")->delimiter(',');
  ab->add_option("--protocols", protocols, "standard, coarse_text, temporal, expanded")->delimiter(',');
  ab->add_option("--epochs", epochs, "epochs");
  ab->add_flag("--force", force, "rerun completed cells");

  // temporal
  auto* te = app.add_subcommand("temporal", "accuracy over [0,t] and [t,end] windows");
  DataFlags te_d;
  add_data_flags(te, te_d, false);
  std::vector<double> boundaries;
  te->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  te->add_option("--boundaries", boundaries, "boundaries in ms")->delimiter(',');
  bool retrain = false;
  te->add_flag("--retrain-per-window", retrain,
               "train a fresh model per window instead of masking one model (needs data)");
  te->add_option("--epochs", epochs, "epochs per retrained model");

  // expanded
  auto* xp = app.add_subcommand("expanded", "multi-image gallery retrieval");
  DataFlags xp_d;
  add_data_flags(xp, xp_d, false);
  std::optional<Index> per_class;
  xp->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  xp->add_option("--images-per-class", per_class, "gallery images per class");

  // complexity
  auto* cx = app.add_subcommand("complexity", "parameter and MAC counts");
  cx->add_option("--variant", variant, "ablation variant");

  // report
  auto* rp = app.add_subcommand("report", "rebuild the aggregate table of an ablation run");
  std::string plan_dir;
  rp->add_option("--plan", plan_dir, "ablation output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    ExperimentConfig cfg = load_config(g);
    const fs::path out(g.out);

    if (*ex) {
      BackboneOptions bo;
      bo.command = backbone_cmd;
      bo.prompt_template = prompt;
      const auto fb = extract_backbone_features(images, labels, out, bo);
      std::cout << "wrote " << fb.final.size() << " image and " << fb.text.size()
                << " text features to " << out << "\n";
    } else if (*sy) {
      if (g.seed) spec.seed = *g.seed;
      if (no_late) spec.late_window = {0, 0};
      if (no_early) spec.early_window = {0, 0};
      const FeatureBundle fb = synthetic_features(spec.feature_spec());
      write_cache(fb, out / "features");
      std::vector<std::string> names;
      for (Index s = 1; s <= n_subjects; ++s) {
        SyntheticSpec sub = spec;
        sub.subject = s;
        const SubjectDataset ds = synthesize_corpus(sub, fb);
        write_subject(out / "eeg", ds);
        names.push_back(ds.subject_id);
      }
      // A ready-to-use config for the desk-scale corpus.
      ExperimentConfig sc = cfg;
      sc.model.n_timesteps = spec.timesteps;
      sc.train.learning_rate = 1e-3;
      sc.train.batch_size = 64;
      sc.data.root = (out / "eeg").string();
      sc.data.features = (out / "features").string();
      sc.data.subjects = names;
      sc.eval.temporal_boundaries_ms = {0, 125, 250, 375, 500, 562.5, 625, 750, 875, 1000};
      sc.eval.expanded.images_per_class = spec.images_per_class;
      io::write_file_atomic(out / "config.json", nlohmann::json(sc).dump(2));
      io::write_file_atomic(out / "synthetic.json",
                            nlohmann::json{{"classes", spec.n_classes},
                                           {"images_per_class", spec.images_per_class},
                                           {"reps", spec.reps},
                                           {"test_reps", spec.test_reps},
                                           {"heldout", spec.n_heldout},
                                           {"timesteps", spec.timesteps},
                                           {"noise_sd", spec.noise_sd},
                                           {"early_window", {spec.early_window.begin, spec.early_window.end}},
                                           {"late_window", {spec.late_window.begin, spec.late_window.end}},
                                           {"seed", spec.seed},
                                           {"subjects", names},
                                           {"rng", kRngAlgorithm}}
                                .dump(2));
      std::cout << "synthetic corpus: " << names.size() << " subject(s) in " << out / "eeg"
                << ", features in " << out / "features" << ", config " << out / "config.json"
                << "\n";
    } else if (*tr) {
      apply(cfg, tr_d, g);
      if (epochs) cfg.train.epochs = *epochs;
      if (batch) cfg.train.batch_size = *batch;
      if (lr) cfg.train.learning_rate = *lr;
      const std::string subject = target_subject(cfg);
      const Split split = build_split(cfg, subject);
      const FeatureBundle fb = load_cached_features(cfg.data.features);
      const AblationVariant v = build_variant(variant, cfg.model);
      ParamSet<float> ps;
      StagedModel model(v.config, ps);
      model.init(ps, derive_seed(cfg.train.seed, hash_string("init")));
      TrainOutputs to;
      to.out_dir = out;
      to.extra_manifest = {{"variant", variant}, {"subject", subject},
                           {"experiment_config", cfg}};
      to.on_epoch = [](const EpochLog& e) {
        std::cout << "epoch " << e.epoch << "  total " << e.terms.total << "  L_I "
                  << e.terms.phase1 << "  L_IIc " << e.terms.coarse << "  L_IIf " << e.terms.fine
                  << "  L_III " << e.terms.fusion << "  (" << e.seconds << " s)\n";
      };
      const TrainResult r = train(model, ps, split.train, fb, cfg.train, to);
      std::cout << "checkpoint " << out / "model.ckpt" << " (" << r.params_hash << ")\n";
    } else if (*ev) {
      apply(cfg, ev_d, g);
      Loaded l = load_model(ckpt);
      const Split split = build_split(cfg, target_subject(cfg));
      const FeatureBundle fb = load_cached_features(cfg.data.features);
      const auto use_ks = ks.empty() ? cfg.eval.ks : ks;
      const auto use_stages = stages.empty() ? cfg.eval.stages : stages;
      std::vector<std::pair<std::string, RetrievalReport>> rows;
      nlohmann::json all = nlohmann::json::array();
      for (const auto& s : use_stages) {
        const Stage st = stage_from_string(s);
        RetrievalReport r = st == Stage::II_coarse
                                ? coarse_text_retrieval(l.model, l.ps, split.eval, fb, use_ks)
                                : standard_protocol(l.model, l.ps, split.eval, fb, st, use_ks);
        print_report(r);
        rows.emplace_back(s, r);
        all.push_back(r);
      }
      if (model_has_stage(l.model, Stage::II_coarse) &&
          std::find(use_stages.begin(), use_stages.end(), "II_coarse") == use_stages.end()) {
        const auto r = coarse_text_retrieval(l.model, l.ps, split.eval, fb, use_ks);
        print_report(r);
        rows.emplace_back("II_coarse", r);
        all.push_back(r);
      }
      io::write_file_atomic(out / "report.json", all.dump(1));
      io::write_file_atomic(out / "report.csv", reports_csv(rows));
    } else if (*ab) {
      apply(cfg, ab_d, g);
      if (epochs) cfg.train.epochs = *epochs;
      if (!protocols.empty()) cfg.eval.protocols = protocols;
      ExperimentPlan plan;
      plan.variants = variants.empty() ? variant_names() : variants;
      plan.subjects = cfg.data.subjects;
      plan.seeds = seeds.empty() ? std::vector<std::uint64_t>{cfg.train.seed} : seeds;
      plan.out_dir = out;
      plan.config = cfg;
      plan.force = force;
      io::write_file_atomic(out / "plan.json",
                            nlohmann::json{{"variants", plan.variants},
                                           {"subjects", plan.subjects},
                                           {"seeds", plan.seeds},
                                           {"config", cfg}}
                                .dump(2));
      const PlanResult r = run_plan(plan, [](const CellOutcome& c) {
        std::cout << c.variant << " " << c.subject << " seed " << c.seed << ": " << c.status
                  << (c.error.empty() ? "" : " (" + c.error + ")") << "\n";
      });
      std::cout << r.count("trained") << " trained, " << r.count("cached") << " cached, "
                << r.count("failed") << " failed; table " << r.aggregate_csv << "\n";
      return r.exit_code();
    } else if (*te) {
      apply(cfg, te_d, g);
      if (epochs) cfg.train.epochs = *epochs;
      Loaded l = load_model(ckpt);
      const Split split = build_split(cfg, target_subject(cfg));
      const FeatureBundle fb = load_cached_features(cfg.data.features);
      const auto& bounds = boundaries.empty() ? cfg.eval.temporal_boundaries_ms : boundaries;
      const auto curves = retrain ? temporal_retrain(l.ck.config, cfg.train, split, fb, bounds)
                                  : temporal_accumulation(l.model, l.ps, split.eval, fb, bounds);
      const std::string csv = temporal_csv(curves);
      io::write_file_atomic(out / "temporal.csv", csv);
      std::cout << csv;
    } else if (*xp) {
      apply(cfg, xp_d, g);
      if (per_class) cfg.eval.expanded.images_per_class = *per_class;
      Loaded l = load_model(ckpt);
      const Split split = build_split(cfg, target_subject(cfg));
      const FeatureBundle fb = load_cached_features(cfg.data.features);
      const auto reps = expanded_protocol(l.model, l.ps, split.eval, fb, cfg.eval.expanded);
      std::vector<std::pair<std::string, RetrievalReport>> rows;
      for (const auto& r : reps) {
        print_report(r);
        rows.emplace_back(r.stage + "|" + r.match, r);
      }
      io::write_file_atomic(out / "expanded.json", nlohmann::json(reps).dump(1));
      io::write_file_atomic(out / "expanded.csv", reports_csv(rows));
    } else if (*cx) {
      const AblationVariant v = build_variant(variant, cfg.model);
      ParamSet<float> ps;
      StagedModel model(v.config, ps);
      std::cout << complexity_table(count_complexity(model, ps));
    } else if (*rp) {
      const fs::path dir(plan_dir);
      const auto pj = nlohmann::json::parse(io::read_text(dir / "plan.json"));
      ExperimentPlan plan;
      pj.at("variants").get_to(plan.variants);
      pj.at("subjects").get_to(plan.subjects);
      pj.at("seeds").get_to(plan.seeds);
      plan.out_dir = dir;
      const std::string csv = aggregate_reports(plan);
      io::write_file_atomic(dir / "aggregate.csv", csv);
      std::cout << csv;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
