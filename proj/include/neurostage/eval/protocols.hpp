#pragma once

#include "neurostage/data/eeg.hpp"
#include "neurostage/eval/retrieval.hpp"
#include "neurostage/features/feature_bundle.hpp"
#include "neurostage/model/staged_model.hpp"
#include "neurostage/train/trainer.hpp"

#include <nlohmann/json.hpp>

#include <iomanip>
#include <map>
#include <sstream>

namespace neurostage {

enum class Stage { I, II_coarse, II_fine, III };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::I: return "I";
    case Stage::II_coarse: return "II_coarse";
    case Stage::II_fine: return "II_fine";
    case Stage::III: return "III";
  }
  return "?";
}

inline Stage stage_from_string(const std::string& s) {
  if (s == "I") return Stage::I;
  if (s == "II_coarse") return Stage::II_coarse;
  if (s == "II_fine") return Stage::II_fine;
  if (s == "III") return Stage::III;
  throw ArgumentError("unknown stage '" + s + "' (expected I, II_coarse, II_fine or III)");
}

inline bool model_has_stage(const StagedModel& m, Stage s) {
  switch (s) {
    case Stage::I: return m.config().phase1;
    case Stage::II_coarse: return m.config().has_coarse();
    case Stage::II_fine: return m.config().has_fine();
    case Stage::III: return true;
  }
  return false;
}

/// Unit-normalized stage embeddings for a query matrix in model input layout.
inline Mat<float> embed_queries(const StagedModel& model, const ParamSet<float>& ps,
                                const Mat<float>& input, Stage stage, Index chunk = 256) {
  if (!model_has_stage(model, stage))
    throw ProtocolError(std::string("model variant has no stage ") + to_string(stage));
  Mat<float> out;
  for (Index start = 0; start < input.rows(); start += chunk) {
    const Index b = std::min(chunk, input.rows() - start);
    const auto emb = model.forward_all(ps, Mat<float>(input.middleRows(start, b)),
                                       ForwardOptions::eval());
    const Mat<float>* e = nullptr;
    switch (stage) {
      case Stage::I: e = &emb.e1; break;
      case Stage::II_coarse: e = &emb.e_coarse; break;
      case Stage::II_fine: e = &emb.e_fine; break;
      case Stage::III: e = &emb.e_eeg; break;
    }
    if (out.size() == 0) out.resize(input.rows(), e->cols());
    out.middleRows(start, b) = l2_normalize_rows(*e, "query embedding");
  }
  return out;
}

/// Image gallery at the feature level matching `stage`: projected low (I),
/// projected high (II_fine) or final (III) features.
inline Gallery image_gallery(const StagedModel& model, const ParamSet<float>& ps,
                             const FeatureBundle& fb, const std::vector<std::string>& stimuli,
                             Stage stage, GalleryKind kind) {
  Gallery g;
  g.kind = kind;
  g.stimulus_ids = stimuli;
  for (const auto& s : stimuli) g.class_ids.push_back(fb.class_of(s));
  switch (stage) {
    case Stage::I: g.embeddings = model.project(ps, "low", fb.low.gather(stimuli)); break;
    case Stage::II_fine: g.embeddings = model.project(ps, "high", fb.high.gather(stimuli)); break;
    case Stage::III: g.embeddings = l2_normalize_rows(fb.final.gather(stimuli), "final feature"); break;
    case Stage::II_coarse:
      throw ProtocolError("stage II_coarse is matched against text features, not images");
  }
  return g;
}

inline Gallery text_gallery(const FeatureBundle& fb, const std::vector<std::string>& classes) {
  Gallery g;
  g.kind = GalleryKind::text;
  g.stimulus_ids = classes;
  g.class_ids = classes;
  g.embeddings = l2_normalize_rows(fb.text.gather(classes), "text feature");
  return g;
}

// ---------------------------------------------------------------------------

/// Per-subject top-k accuracies for one (protocol, stage, match mode).
struct RetrievalReport {
  std::string protocol;
  std::string stage;
  std::string match = "exact";
  std::vector<int> ks;
  std::vector<std::string> subjects;
  std::vector<std::vector<double>> accuracy;  // [subject][k], percent
  Index n_queries = 0;
  nlohmann::json gallery = nlohmann::json::object();
  std::string config_hash;

  std::vector<double> average() const {
    std::vector<double> avg(ks.size(), 0.0);
    for (const auto& row : accuracy)
      for (std::size_t i = 0; i < ks.size(); ++i) avg[i] += row[i];
    for (auto& a : avg) a /= accuracy.empty() ? 1.0 : static_cast<double>(accuracy.size());
    return avg;
  }

  double at(const std::string& subject, int k) const {
    const auto si = std::find(subjects.begin(), subjects.end(), subject) - subjects.begin();
    const auto ki = std::find(ks.begin(), ks.end(), k) - ks.begin();
    require<ArgumentError>(si < static_cast<long>(subjects.size()) &&
                               ki < static_cast<long>(ks.size()),
                           "report has no entry for ", subject, " top-", k);
    return accuracy[static_cast<std::size_t>(si)][static_cast<std::size_t>(ki)];
  }

  void merge(const RetrievalReport& o) {
    require<ArgumentError>(o.protocol == protocol && o.stage == stage && o.match == match &&
                               o.ks == ks,
                           "cannot merge reports of different protocols");
    subjects.insert(subjects.end(), o.subjects.begin(), o.subjects.end());
    accuracy.insert(accuracy.end(), o.accuracy.begin(), o.accuracy.end());
  }
};

inline void to_json(nlohmann::json& j, const RetrievalReport& r) {
  j = nlohmann::json{{"protocol", r.protocol}, {"stage", r.stage},       {"match", r.match},
                     {"ks", r.ks},             {"subjects", r.subjects}, {"accuracy", r.accuracy},
                     {"average", r.average()}, {"n_queries", r.n_queries},
                     {"gallery", r.gallery},   {"config_hash", r.config_hash}};
}

inline void from_json(const nlohmann::json& j, RetrievalReport& r) {
  j.at("protocol").get_to(r.protocol);
  j.at("stage").get_to(r.stage);
  j.at("match").get_to(r.match);
  j.at("ks").get_to(r.ks);
  j.at("subjects").get_to(r.subjects);
  j.at("accuracy").get_to(r.accuracy);
  r.n_queries = j.value("n_queries", Index{0});
  r.gallery = j.value("gallery", nlohmann::json::object());
  r.config_hash = j.value("config_hash", std::string());
}

/// Table with one row per (label, k) and columns subjects..., Avg.
inline std::string reports_csv(const std::vector<std::pair<std::string, RetrievalReport>>& rows) {
  std::vector<std::string> subjects;
  for (const auto& [label, r] : rows)
    for (const auto& s : r.subjects)
      if (std::find(subjects.begin(), subjects.end(), s) == subjects.end()) subjects.push_back(s);
  std::ostringstream os;
  os << std::setprecision(10) << "row,k";
  for (const auto& s : subjects) os << ',' << s;
  os << ",Avg\n";
  for (const auto& [label, r] : rows) {
    const auto avg = r.average();
    for (std::size_t ki = 0; ki < r.ks.size(); ++ki) {
      os << label << ',' << r.ks[ki];
      for (const auto& s : subjects) {
        auto it = std::find(r.subjects.begin(), r.subjects.end(), s);
        os << ',';
        if (it != r.subjects.end())
          os << r.accuracy[static_cast<std::size_t>(it - r.subjects.begin())][ki];
      }
      os << ',' << avg[ki] << '\n';
    }
  }
  return os.str();
}

inline std::string config_hash(const ModelConfig& cfg) {
  const std::string s = nlohmann::json(cfg).dump();
  return hex64(fnv1a(s.data(), s.size()));
}

namespace detail {

inline RetrievalReport single_report(const std::string& protocol, Stage stage, MatchMode mode,
                                     const EvalView& view, const TopK& r, const Gallery& g,
                                     const ModelConfig& cfg) {
  RetrievalReport rep;
  rep.protocol = protocol;
  rep.stage = to_string(stage);
  rep.match = to_string(mode);
  rep.ks = r.ks;
  rep.subjects = {view.subject_id};
  rep.accuracy = {r.accuracy};
  rep.n_queries = r.n_queries;
  rep.gallery = {{"kind", to_string(g.kind)}, {"size", g.size()}};
  rep.config_hash = config_hash(cfg);
  return rep;
}

inline std::vector<std::string> unique_in_order(const std::vector<std::string>& v) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& s : v)
    if (seen.insert(s).second) out.push_back(s);
  return out;
}

}  // namespace detail

/// Zero-shot retrieval of the collapsed test queries against the test-image
/// gallery (or `gallery_stimuli` when given) at the stage's feature level.
inline RetrievalReport standard_protocol(const StagedModel& model, const ParamSet<float>& ps,
                                         const EvalView& view, const FeatureBundle& fb, Stage stage,
                                         const std::vector<int>& ks = {1, 5},
                                         const std::vector<std::string>* gallery_stimuli = nullptr) {
  if (stage == Stage::II_coarse)
    throw ProtocolError("stage II_coarse uses coarse_text_retrieval");
  const Mat<float> x = model_input(view.queries, view.channel_names, view.timesteps, model.config());
  const Mat<float> q = embed_queries(model, ps, x, stage);
  const auto stimuli = gallery_stimuli ? *gallery_stimuli : detail::unique_in_order(view.stimulus_ids);
  const Gallery g = image_gallery(model, ps, fb, stimuli, stage, GalleryKind::standard);
  const TopK r = retrieval_topk(q, view.stimulus_ids, view.class_ids, g, ks, MatchMode::exact);
  return detail::single_report("standard", stage, MatchMode::exact, view, r, g, model.config());
}

/// Coarse embeddings against the class text features of the evaluation classes.
inline RetrievalReport coarse_text_retrieval(const StagedModel& model, const ParamSet<float>& ps,
                                             const EvalView& view, const FeatureBundle& fb,
                                             const std::vector<int>& ks = {1, 5}) {
  const Mat<float> x = model_input(view.queries, view.channel_names, view.timesteps, model.config());
  const Mat<float> q = embed_queries(model, ps, x, Stage::II_coarse);
  std::vector<std::string> classes = detail::unique_in_order(view.class_ids);
  std::sort(classes.begin(), classes.end());
  const Gallery g = text_gallery(fb, classes);
  const TopK r = retrieval_topk(q, view.class_ids, view.class_ids, g, ks, MatchMode::category);
  return detail::single_report("coarse_text", Stage::II_coarse, MatchMode::category, view, r, g,
                               model.config());
}

// ---------------------------------------------------------------------------
// Temporal accumulation: accuracy with the input restricted to [start, t) or
// [t, end). Sample k sits at start + k * (end - start) / T ms.

struct TemporalCurves {
  std::vector<double> boundaries_ms;
  std::vector<std::string> stages;
  std::vector<std::vector<double>> prefix;  // [stage][boundary] top-1 percent, window [0, t]
  std::vector<std::vector<double>> suffix;  // window [t, end]
};

inline EvalView mask_time(const EvalView& v, double from_ms, double to_ms) {
  EvalView out = v;
  const Index t = v.timesteps;
  const double step = (v.epoch_end_ms - v.epoch_start_ms) / static_cast<double>(t);
  for (Index k = 0; k < t; ++k) {
    const double ms = v.epoch_start_ms + static_cast<double>(k) * step;
    if (ms >= from_ms && ms < to_ms) continue;
    for (Index c = 0; c < static_cast<Index>(v.channel_names.size()); ++c)
      out.queries.col(c * t + k).setZero();
  }
  return out;
}

inline TemporalCurves temporal_accumulation(const StagedModel& model, const ParamSet<float>& ps,
                                            const EvalView& view, const FeatureBundle& fb,
                                            const std::vector<double>& boundaries_ms,
                                            const std::vector<Stage>& stages = {Stage::I, Stage::II_fine, Stage::III}) {
  TemporalCurves out;
  out.boundaries_ms = boundaries_ms;
  for (double b : boundaries_ms)
    require<ArgumentError>(b >= view.epoch_start_ms && b <= view.epoch_end_ms, "boundary ", b,
                           " ms outside [", view.epoch_start_ms, ", ", view.epoch_end_ms, "]");
  const double end = view.epoch_end_ms + 1.0;  // include the last sample
  for (Stage s : stages) {
    if (!model_has_stage(model, s)) continue;
    out.stages.push_back(to_string(s));
    std::vector<double> pre, suf;
    for (double b : boundaries_ms) {
      const double upto = b >= view.epoch_end_ms ? end : b;
      pre.push_back(standard_protocol(model, ps, mask_time(view, view.epoch_start_ms - 1.0, upto),
                                      fb, s, {1})
                        .accuracy[0][0]);
      suf.push_back(standard_protocol(model, ps, mask_time(view, b, end), fb, s, {1}).accuracy[0][0]);
    }
    out.prefix.push_back(pre);
    out.suffix.push_back(suf);
  }
  return out;
}

inline std::string temporal_csv(const TemporalCurves& c) {
  std::ostringstream os;
  os << std::setprecision(10) << "stage,window,t_ms,top1\n";
  for (std::size_t s = 0; s < c.stages.size(); ++s)
    for (std::size_t i = 0; i < c.boundaries_ms.size(); ++i) {
      os << c.stages[s] << ",0-t," << c.boundaries_ms[i] << ',' << c.prefix[s][i] << '\n';
      os << c.stages[s] << ",t-end," << c.boundaries_ms[i] << ',' << c.suffix[s][i] << '\n';
    }
  return os.str();
}

// ---------------------------------------------------------------------------
// Expanded multi-image protocol.

struct ExpandedSpec {
  Index images_per_class = 12;
  std::uint64_t seed = 42;
  std::vector<int> ks = {1, 5, 10};
};

/// Per class: the query's own test image plus images_per_class - 1 others
/// drawn without replacement from `pool` (sorted ids, shuffled by a stream
/// derived from (seed, class id)). Galleries are listed in class order.
inline std::vector<std::string> expanded_gallery_ids(
    const EvalView& view, const std::map<std::string, std::vector<std::string>>& pool,
    const ExpandedSpec& spec) {
  require<ArgumentError>(spec.images_per_class >= 1, "images_per_class must be >= 1");
  std::vector<std::string> ids;
  for (std::size_t q = 0; q < view.stimulus_ids.size(); ++q) {
    const auto& cls = view.class_ids[q];
    const auto& own = view.stimulus_ids[q];
    auto it = pool.find(cls);
    std::vector<std::string> cand;
    if (it != pool.end())
      for (const auto& s : it->second)
        if (s != own) cand.push_back(s);
    std::sort(cand.begin(), cand.end());
    const auto need = static_cast<std::size_t>(spec.images_per_class - 1);
    if (cand.size() < need)
      throw ArgumentError(detail::concat("class ", cls, " has ", cand.size(),
                                         " extra images in the pool, ", need, " required"));
    Rng rng(derive_seed(spec.seed, hash_string(cls)));
    rng.shuffle(cand);
    ids.push_back(own);
    ids.insert(ids.end(), cand.begin(), cand.begin() + static_cast<long>(need));
  }
  return ids;
}

inline std::map<std::string, std::vector<std::string>> pool_from_bundle(const FeatureBundle& fb) {
  std::map<std::string, std::vector<std::string>> pool;
  for (const auto& [s, c] : fb.stimulus_class) pool[c].push_back(s);
  return pool;
}

/// Reports for every available image stage in both match modes.
inline std::vector<RetrievalReport> expanded_protocol(
    const StagedModel& model, const ParamSet<float>& ps, const EvalView& view,
    const FeatureBundle& fb, const ExpandedSpec& spec = {},
    const std::map<std::string, std::vector<std::string>>* pool = nullptr) {
  const auto own_pool = pool ? *pool : pool_from_bundle(fb);
  const auto ids = expanded_gallery_ids(view, own_pool, spec);
  const Mat<float> x = model_input(view.queries, view.channel_names, view.timesteps, model.config());
  std::vector<RetrievalReport> out;
  for (Stage s : {Stage::I, Stage::II_fine, Stage::III}) {
    if (!model_has_stage(model, s)) continue;
    const Mat<float> q = embed_queries(model, ps, x, s);
    const Gallery g = image_gallery(model, ps, fb, ids, s, GalleryKind::expanded);
    for (MatchMode m : {MatchMode::category, MatchMode::exact}) {
      const TopK r = retrieval_topk(q, view.stimulus_ids, view.class_ids, g, spec.ks, m);
      auto rep = detail::single_report("expanded", s, m, view, r, g, model.config());
      rep.gallery["images_per_class"] = spec.images_per_class;
      rep.gallery["seed"] = spec.seed;
      rep.gallery["rng"] = kRngAlgorithm;
      out.push_back(std::move(rep));
    }
  }
  return out;
}

}  // namespace neurostage
