#pragma once

#include "neurostage/data/eeg.hpp"
#include "neurostage/eval/protocols.hpp"
#include "neurostage/experiments/config.hpp"
#include "neurostage/experiments/variants.hpp"
#include "neurostage/features/feature_cache.hpp"
#include "neurostage/train/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <set>

namespace neurostage {

inline const std::set<std::string>& protocol_names() {
  static const std::set<std::string> p = {"standard", "coarse_text", "temporal", "expanded"};
  return p;
}

/// Trains `variant` on `split` and runs the requested protocols. Writes the
/// run's checkpoint, manifest and epoch log plus report.json into `dir`.
inline nlohmann::json run_cell(const std::string& variant, const std::string& subject,
                               std::uint64_t seed, const Split& split, const FeatureBundle& fb,
                               const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  const AblationVariant v = build_variant(variant, cfg.model);
  ParamSet<float> ps;
  StagedModel model(v.config, ps);
  model.init(ps, derive_seed(seed, hash_string("init")));
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  TrainOutputs out;
  out.out_dir = dir;
  out.extra_manifest = {{"variant", variant},
                        {"subject", subject},
                        {"train_subjects", split.train_subjects},
                        {"zscore", split.stats.has_value()}};
  const TrainResult tr = train(model, ps, split.train, fb, tc, out);

  nlohmann::json reports = nlohmann::json::array();
  const auto& protocols = cfg.eval.protocols;
  auto wants = [&](const std::string& p) {
    return std::find(protocols.begin(), protocols.end(), p) != protocols.end();
  };
  if (wants("standard"))
    for (const auto& s : cfg.eval.stages) {
      const Stage st = stage_from_string(s);
      if (st == Stage::II_coarse || !model_has_stage(model, st)) continue;
      reports.push_back(standard_protocol(model, ps, split.eval, fb, st, cfg.eval.ks));
    }
  if (wants("coarse_text") && model_has_stage(model, Stage::II_coarse))
    reports.push_back(coarse_text_retrieval(model, ps, split.eval, fb, cfg.eval.ks));
  if (wants("expanded"))
    for (auto& r : expanded_protocol(model, ps, split.eval, fb, cfg.eval.expanded))
      reports.push_back(std::move(r));
  if (wants("temporal")) {
    const auto curves =
        temporal_accumulation(model, ps, split.eval, fb, cfg.eval.temporal_boundaries_ms);
    io::write_file_atomic(dir / "temporal.csv", temporal_csv(curves));
  }
  nlohmann::json cell = {{"variant", variant},
                         {"subject", subject},
                         {"seed", seed},
                         {"params_hash", tr.params_hash},
                         {"reports", reports}};
  io::write_file_atomic(dir / "report.json", cell.dump(1));
  return cell;
}

/// Temporal accumulation with one freshly trained model per window instead of
/// masking a single full-window model. Training inputs get the same zero mask
/// as the queries. Costs 2 x |boundaries| training runs.
inline TemporalCurves temporal_retrain(const ModelConfig& mc, const TrainConfig& tc,
                                       const Split& split, const FeatureBundle& fb,
                                       const std::vector<double>& boundaries_ms,
                                       const std::vector<Stage>& stages = {Stage::I, Stage::II_fine,
                                                                           Stage::III}) {
  const EvalView& ev = split.eval;
  for (double b : boundaries_ms)
    require<ArgumentError>(b >= ev.epoch_start_ms && b <= ev.epoch_end_ms, "boundary ", b,
                           " ms outside [", ev.epoch_start_ms, ", ", ev.epoch_end_ms, "]");
  EvalView train_as_view = ev;
  train_as_view.queries = split.train.data;
  train_as_view.channel_names = split.train.channel_names;
  train_as_view.timesteps = split.train.timesteps;

  auto run = [&](double from, double to) {
    EegStore masked_train = split.train;
    masked_train.data = mask_time(train_as_view, from, to).queries;
    ParamSet<float> ps;
    StagedModel model(mc, ps);
    model.init(ps, derive_seed(tc.seed, hash_string("init")));
    train(model, ps, masked_train, fb, tc);
    const EvalView masked = mask_time(ev, from, to);
    std::vector<double> acc;
    for (Stage s : stages)
      if (model_has_stage(model, s))
        acc.push_back(standard_protocol(model, ps, masked, fb, s, {1}).accuracy[0][0]);
    return acc;
  };

  ParamSet<float> probe_ps;
  const StagedModel probe(mc, probe_ps);
  TemporalCurves out;
  out.boundaries_ms = boundaries_ms;
  for (Stage s : stages)
    if (model_has_stage(probe, s)) out.stages.push_back(to_string(s));
  out.prefix.assign(out.stages.size(), {});
  out.suffix.assign(out.stages.size(), {});
  const double end = ev.epoch_end_ms + 1.0;
  for (double b : boundaries_ms) {
    const auto pre = run(ev.epoch_start_ms - 1.0, b >= ev.epoch_end_ms ? end : b);
    const auto suf = run(b, end);
    for (std::size_t i = 0; i < out.stages.size(); ++i) {
      out.prefix[i].push_back(pre[i]);
      out.suffix[i].push_back(suf[i]);
    }
  }
  return out;
}

struct ExperimentPlan {
  std::vector<std::string> variants = {"Ours-All"};
  std::vector<std::string> subjects;
  std::vector<std::uint64_t> seeds = {42};
  std::filesystem::path out_dir;
  ExperimentConfig config;
  bool force = false;
};

struct CellOutcome {
  std::string variant, subject;
  std::uint64_t seed = 0;
  std::string status;  // trained | cached | failed
  std::string error;
};

struct PlanResult {
  std::vector<CellOutcome> cells;
  std::filesystem::path aggregate_csv;
  std::size_t count(const std::string& status) const {
    return static_cast<std::size_t>(std::count_if(
        cells.begin(), cells.end(), [&](const CellOutcome& c) { return c.status == status; }));
  }
  int exit_code() const { return count("failed") ? 1 : 0; }
};

inline std::filesystem::path cell_dir(const ExperimentPlan& p, const std::string& variant,
                                      const std::string& subject, std::uint64_t seed) {
  return p.out_dir / variant / subject / ("seed-" + std::to_string(seed));
}

/// Validates everything a plan references before any training starts.
inline void preflight(const ExperimentPlan& p) {
  const DataConfig& d = p.config.data;
  require<ArgumentError>(!p.variants.empty() && !p.subjects.empty() && !p.seeds.empty(),
                         "plan needs at least one variant, subject and seed");
  require<ArgumentError>(!p.out_dir.empty(), "plan needs an output directory");
  for (const auto& v : p.variants) (void)build_variant(v, p.config.model);
  for (const auto& proto : p.config.eval.protocols)
    require<ArgumentError>(protocol_names().contains(proto), "unknown protocol '", proto, "'");
  for (const auto& s : p.config.eval.stages) (void)stage_from_string(s);
  (void)split_mode_from_string(d.split);
  if (!std::filesystem::is_directory(d.root))
    throw LoadError("data root '" + d.root + "' does not exist");
  if (!std::filesystem::is_directory(d.features))
    throw LoadError("feature cache '" + d.features + "' does not exist");
  for (const auto& s : p.subjects)
    if (!std::filesystem::is_directory(std::filesystem::path(d.root) / s))
      throw LoadError("subject '" + s + "' not found under " + d.root);
}

/// Rows "<variant>|<protocol>|<stage>|<match>", columns = subjects (mean over
/// seeds) and Avg. A pure function of the cell report files.
inline std::string aggregate_reports(const ExperimentPlan& p) {
  std::map<std::string, RetrievalReport> rows;
  std::vector<std::string> order;
  for (const auto& variant : p.variants)
    for (const auto& subject : p.subjects) {
      std::map<std::string, std::vector<RetrievalReport>> per_key;
      for (auto seed : p.seeds) {
        const auto f = cell_dir(p, variant, subject, seed) / "report.json";
        if (!std::filesystem::exists(f)) continue;
        const auto cell = nlohmann::json::parse(io::read_text(f));
        for (const auto& rj : cell.at("reports")) {
          RetrievalReport r = rj.get<RetrievalReport>();
          per_key[variant + "|" + r.protocol + "|" + r.stage + "|" + r.match].push_back(r);
        }
      }
      for (auto& [key, reps] : per_key) {
        RetrievalReport mean = reps.front();
        mean.subjects = {subject};
        mean.accuracy = {std::vector<double>(mean.ks.size(), 0.0)};
        for (const auto& r : reps)
          for (std::size_t k = 0; k < mean.ks.size(); ++k)
            mean.accuracy[0][k] += r.accuracy[0][k] / static_cast<double>(reps.size());
        auto it = rows.find(key);
        if (it == rows.end()) {
          rows.emplace(key, mean);
          order.push_back(key);
        } else {
          it->second.merge(mean);
        }
      }
    }
  std::vector<std::pair<std::string, RetrievalReport>> table;
  for (const auto& k : order) table.emplace_back(k, rows.at(k));
  return reports_csv(table);
}

inline PlanResult run_plan(const ExperimentPlan& p,
                           const std::function<void(const CellOutcome&)>& on_cell = {}) {
  preflight(p);
  const DataConfig& d = p.config.data;
  const FeatureBundle fb = load_cached_features(d.features);
  LoadOptions lo;
  lo.timesteps = p.config.model.n_timesteps;
  if (d.things_eeg_counts) lo = LoadOptions::things_eeg();
  const SplitMode mode = split_mode_from_string(d.split);

  std::vector<SubjectDataset> loaded;
  auto ensure_loaded = [&]() {
    if (!loaded.empty()) return;
    for (const auto& s : p.subjects) loaded.push_back(load_subject(d.root, s, lo));
  };

  PlanResult res;
  for (const auto& variant : p.variants)
    for (const auto& subject : p.subjects)
      for (auto seed : p.seeds) {
        CellOutcome c{variant, subject, seed, "", ""};
        const auto dir = cell_dir(p, variant, subject, seed);
        if (!p.force && std::filesystem::exists(dir / "report.json")) {
          c.status = "cached";
        } else {
          try {
            std::filesystem::create_directories(dir);
            std::filesystem::remove(dir / "failure.txt");
            ensure_loaded();
            const Split split = make_split(loaded, mode, subject, d.zscore);
            run_cell(variant, subject, seed, split, fb, p.config, dir);
            c.status = "trained";
          } catch (const std::exception& e) {
            c.status = "failed";
            c.error = e.what();
            io::write_file_atomic(dir / "failure.txt", c.error + "\n");
          }
        }
        res.cells.push_back(c);
        if (on_cell) on_cell(c);
      }
  res.aggregate_csv = p.out_dir / "aggregate.csv";
  io::write_file_atomic(res.aggregate_csv, aggregate_reports(p));
  return res;
}

}  // namespace neurostage
