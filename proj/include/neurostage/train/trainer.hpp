#pragma once

#include "neurostage/data/eeg.hpp"
#include "neurostage/features/feature_bundle.hpp"
#include "neurostage/model/staged_model.hpp"
#include "neurostage/objectives/total_loss.hpp"
#include "neurostage/train/checkpoint.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>

namespace neurostage {

struct TrainConfig {
  double learning_rate = 1e-4;
  Index batch_size = 1024;
  Index epochs = 40;
  std::uint64_t seed = 42;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;  // global-norm clip; 0 = off
  LossWeights weights;

  void validate() const {
    require<ConfigError>(learning_rate >= 0, "learning_rate must be >= 0");
    require<ConfigError>(batch_size >= 2, "batch_size must be >= 2 (contrastive loss is degenerate at 1)");
    require<ConfigError>(epochs >= 1, "epochs must be >= 1");
    require<ConfigError>(weight_decay >= 0 && grad_clip >= 0, "weight_decay and grad_clip must be >= 0");
    require<ConfigError>(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && adam_eps > 0,
                         "invalid Adam moments/eps");
    weights.validate();
  }
  bool operator==(const TrainConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
                     {"epochs", c.epochs},               {"seed", c.seed},
                     {"weight_decay", c.weight_decay},   {"beta1", c.beta1},
                     {"beta2", c.beta2},                 {"adam_eps", c.adam_eps},
                     {"grad_clip", c.grad_clip},         {"loss_weights", c.weights}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("learning_rate", c.learning_rate);
  get("batch_size", c.batch_size);
  get("epochs", c.epochs);
  get("seed", c.seed);
  get("weight_decay", c.weight_decay);
  get("beta1", c.beta1);
  get("beta2", c.beta2);
  get("adam_eps", c.adam_eps);
  get("grad_clip", c.grad_clip);
  get("loss_weights", c.weights);
}

// ---------------------------------------------------------------------------

/// Channel names the model reads, in input order: the visual channels, then
/// the real latent channels when the config asks for them. Configs with fewer
/// visual/latent channels than the standard lists take a prefix.
inline std::vector<std::string> input_channel_names(const ModelConfig& cfg) {
  const auto& vis = visual_channels();
  const auto& lang = language_channels();
  require<ConfigError>(cfg.n_visual_channels <= static_cast<Index>(vis.size()),
                       "at most ", vis.size(), " visual channels are defined");
  std::vector<std::string> names(vis.begin(), vis.begin() + cfg.n_visual_channels);
  if (cfg.phase2 && cfg.latent_source == LatentSource::real) {
    require<ConfigError>(cfg.n_latent_channels <= static_cast<Index>(lang.size()),
                         "at most ", lang.size(), " real latent channels are defined");
    names.insert(names.end(), lang.begin(), lang.begin() + cfg.n_latent_channels);
  }
  return names;
}

/// Rearranges a store into model input layout (channel-major, visual first).
inline Mat<float> model_input(const Mat<float>& data, const std::vector<std::string>& channels,
                              Index timesteps, const ModelConfig& cfg) {
  require<ConfigError>(timesteps == cfg.n_timesteps, "data has T = ", timesteps,
                       ", model expects T = ", cfg.n_timesteps);
  EegStore tmp;
  tmp.data = data;
  tmp.channel_names = channels;
  tmp.timesteps = timesteps;
  tmp.stimulus_ids.assign(static_cast<std::size_t>(data.rows()), "");
  tmp.class_ids = tmp.stimulus_ids;
  tmp.repetitions.assign(static_cast<std::size_t>(data.rows()), 0);
  return select_channels(tmp, input_channel_names(cfg)).data;
}

inline Mat<float> model_input(const EegStore& s, const ModelConfig& cfg) {
  return model_input(s.data, s.channel_names, s.timesteps, cfg);
}

/// Raw backbone features aligned with batch rows.
template <class S>
struct BatchTargets {
  Mat<S> low, high, final, text;

  template <class To>
  BatchTargets<To> cast() const {
    return {low.template cast<To>(), high.template cast<To>(), final.template cast<To>(),
            text.template cast<To>()};
  }
};

inline BatchTargets<float> gather_targets(const FeatureBundle& fb,
                                          const std::vector<std::string>& stimuli,
                                          const std::vector<std::string>& classes) {
  return {fb.low.gather(stimuli), fb.high.gather(stimuli), fb.final.gather(stimuli),
          fb.text.gather(classes)};
}

inline void check_feature_coverage(const FeatureBundle& fb, const EegStore& s) {
  for (std::size_t i = 0; i < s.stimulus_ids.size(); ++i) {
    const auto& sid = s.stimulus_ids[i];
    if (!fb.low.contains(sid) || !fb.high.contains(sid) || !fb.final.contains(sid))
      throw ProtocolError("feature bundle has no image features for stimulus '" + sid + "'");
    if (!fb.text.contains(s.class_ids[i]))
      throw ProtocolError("feature bundle has no text feature for class '" + s.class_ids[i] + "'");
  }
}

/// Forward + multi-level loss for one batch; with `g` also the full backward
/// pass (model and image projectors), accumulated into `g`.
template <class S>
LossTerms batch_loss(const StagedModel& model, const ParamSet<S>& ps, const Mat<S>& input,
                     const BatchTargets<S>& raw, const LossWeights& w, const ForwardOptions& opt,
                     Grads<S>* g = nullptr) {
  ForwardCache<S> c;
  model.forward(ps, input, opt, c);
  AlignmentTargets<S> tgt;
  ProjectionCache<S> pl, ph;
  if (model.has_projector("low")) tgt.v1 = model.project(ps, "low", raw.low, &pl);
  if (model.config().has_coarse()) tgt.t_coarse = raw.text;
  if (model.has_projector("high")) tgt.v_fine = model.project(ps, "high", raw.high, &ph);
  tgt.v_image = raw.final;
  LossGradients<S> lg;
  const LossTerms terms = total_loss(model, ps, c.out, tgt, w, g, g ? &lg : nullptr);
  if (g) {
    model.backward(ps, c, lg.embeddings, *g);
    if (model.has_projector("low")) model.project_backward(ps, "low", pl, lg.targets.v1, *g);
    if (model.has_projector("high")) model.project_backward(ps, "high", ph, lg.targets.v_fine, *g);
  }
  return terms;
}

// ---------------------------------------------------------------------------

/// Adam with decoupled weight decay.
class AdamW {
 public:
  explicit AdamW(const ParamSet<float>& ps) : m_(ps.zeros_like()), v_(ps.zeros_like()) {}

  void step(ParamSet<float>& ps, const Grads<float>& g, const TrainConfig& tc) {
    ++t_;
    const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(t_));
    const auto b1 = static_cast<float>(tc.beta1);
    const auto b2 = static_cast<float>(tc.beta2);
    const auto lr = static_cast<float>(tc.learning_rate);
    const auto step = static_cast<float>(tc.learning_rate / bc1);
    const auto decay = static_cast<float>(tc.learning_rate * tc.weight_decay);
    const auto eps = static_cast<float>(tc.adam_eps);
    const auto s2 = static_cast<float>(1.0 / std::sqrt(bc2));
    if (lr == 0.0f) return;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0f - b1) * g[i];
      v_[i] = b2 * v_[i] + (1.0f - b2) * g[i].cwiseProduct(g[i]);
      if (decay != 0.0f) ps[i] -= decay * ps[i];
      ps[i].array() -= step * m_[i].array() / (v_[i].array().sqrt() * s2 + eps);
    }
  }

  long steps() const { return t_; }

 private:
  std::vector<Mat<float>> m_, v_;
  long t_ = 0;
};

inline double clip_grad_norm(Grads<float>& g, double max_norm) {
  double sq = 0;
  for (const auto& m : g) sq += m.cast<double>().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const auto s = static_cast<float>(max_norm / norm);
    for (auto& m : g) m *= s;
  }
  return norm;
}

// ---------------------------------------------------------------------------

struct EpochLog {
  Index epoch = 0;
  LossTerms terms;  // mean over the epoch's steps
  double seconds = 0.0;
};

inline std::string epoch_csv(const std::vector<EpochLog>& logs) {
  std::ostringstream os;
  os.precision(9);
  os << "epoch,L_I,L_IIc,L_IIf,L_III,total,seconds\n";
  // Terms the variant does not have stay empty.
  const auto cell = [&](bool present, double v) {
    if (present) os << v;
    os << ',';
  };
  for (const auto& e : logs) {
    os << e.epoch << ',';
    cell(e.terms.has_phase1, e.terms.phase1);
    cell(e.terms.has_coarse, e.terms.coarse);
    cell(e.terms.has_fine, e.terms.fine);
    os << e.terms.fusion << ',' << e.terms.total << ',' << e.seconds << '\n';
  }
  return os.str();
}

struct TrainOutputs {
  std::optional<std::filesystem::path> out_dir;  // epochs.csv, model.ckpt, manifest.json
  std::function<void(const EpochLog&)> on_epoch;
  std::function<void(Index epoch, Index step, const LossTerms&)> on_step;
  nlohmann::json extra_manifest = nlohmann::json::object();
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  Index steps = 0;
  Index effective_batch = 0;
  double wall_seconds = 0.0;
  std::string params_hash;
  nlohmann::json manifest;
};

inline std::string data_hash(const EegStore& s) {
  std::uint64_t h = fnv1a(s.data.data(), sizeof(float) * static_cast<std::size_t>(s.data.size()));
  for (std::size_t i = 0; i < s.stimulus_ids.size(); ++i) {
    h = fnv1a(s.stimulus_ids[i].data(), s.stimulus_ids[i].size(), h);
    h = fnv1a(s.class_ids[i].data(), s.class_ids[i].size(), h);
  }
  return hex64(h);
}

inline nlohmann::json environment_fingerprint() {
  return {{"compiler", __VERSION__},
          {"cplusplus", __cplusplus},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                        std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"rng", kRngAlgorithm},
          {"train_dtype", "float32"}};
}

namespace detail {

inline const char* first_nonfinite_term(const LossTerms& t) {
  if (!std::isfinite(t.phase1)) return "L_I";
  if (!std::isfinite(t.coarse)) return "L_IIc";
  if (!std::isfinite(t.fine)) return "L_IIf";
  if (!std::isfinite(t.fusion)) return "L_III";
  return "total";
}

inline void accumulate(LossTerms& acc, const LossTerms& t) {
  acc.phase1 += t.phase1;
  acc.coarse += t.coarse;
  acc.fine += t.fine;
  acc.fusion += t.fusion;
  acc.total += t.total;
  acc.has_phase1 = t.has_phase1;
  acc.has_coarse = t.has_coarse;
  acc.has_fine = t.has_fine;
}

inline void scale(LossTerms& t, double s) {
  t.phase1 *= s;
  t.coarse *= s;
  t.fine *= s;
  t.fusion *= s;
  t.total *= s;
}

}  // namespace detail

/// Joint end-to-end optimization of the weighted multi-level objective.
/// Epoch e visits the rows in permutation(n, derive_seed(seed, e)); the last
/// partial batch is dropped. A batch size above the training-set size is
/// clamped to it (recorded in the manifest).
inline TrainResult train(const StagedModel& model, ParamSet<float>& ps, const EegStore& view,
                         const FeatureBundle& fb, const TrainConfig& tc,
                         const TrainOutputs& out = {}) {
  tc.validate();
  view.validate("training view");
  check_feature_coverage(fb, view);
  const Mat<float> x = model_input(view, model.config());
  const auto n = static_cast<Index>(x.rows());
  const Index bs = std::min(tc.batch_size, n);
  require<ConfigError>(bs >= 2, "training view has ", n, " samples; need at least 2");
  const Index steps_per_epoch = n / bs;

  TrainResult res;
  res.effective_batch = bs;
  AdamW opt(ps);
  const auto t_start = std::chrono::steady_clock::now();
  if (out.out_dir) std::filesystem::create_directories(*out.out_dir);

  std::vector<std::string> sids(static_cast<std::size_t>(bs)), cids(static_cast<std::size_t>(bs));
  Mat<float> xb(bs, x.cols());
  for (Index epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto perm = permutation(static_cast<std::size_t>(n), derive_seed(tc.seed, static_cast<std::uint64_t>(epoch)));
    LossTerms acc;
    for (Index step = 0; step < steps_per_epoch; ++step) {
      for (Index r = 0; r < bs; ++r) {
        const std::size_t row = perm[static_cast<std::size_t>(step * bs + r)];
        xb.row(r) = x.row(static_cast<Index>(row));
        sids[static_cast<std::size_t>(r)] = view.stimulus_ids[row];
        cids[static_cast<std::size_t>(r)] = view.class_ids[row];
      }
      const BatchTargets<float> tgt = gather_targets(fb, sids, cids);
      Grads<float> g = ps.zeros_like();
      const LossTerms terms =
          batch_loss(model, ps, xb, tgt, tc.weights,
                     ForwardOptions::train(derive_seed(tc.seed, static_cast<std::uint64_t>(epoch),
                                                       static_cast<std::uint64_t>(step))),
                     &g);
      if (!std::isfinite(terms.total)) {
        std::string where;
        if (out.out_dir) {
          const auto p = *out.out_dir / "last_good.ckpt";
          save_checkpoint(ps, model.config(), p, {{"epoch", epoch}, {"step", step}});
          where = "; last good parameters saved to " + p.string();
        }
        throw NumericError(detail::concat("non-finite loss term ", detail::first_nonfinite_term(terms),
                                          " at epoch ", epoch, ", step ", step, where));
      }
      if (tc.grad_clip > 0) clip_grad_norm(g, tc.grad_clip);
      opt.step(ps, g, tc);
      detail::accumulate(acc, terms);
      ++res.steps;
      if (out.on_step) out.on_step(epoch, step, terms);
    }
    if (steps_per_epoch > 0) detail::scale(acc, 1.0 / static_cast<double>(steps_per_epoch));
    EpochLog log{epoch, acc,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    res.epochs.push_back(log);
    if (out.on_epoch) out.on_epoch(log);
    if (out.out_dir) io::write_file_atomic(*out.out_dir / "epochs.csv", epoch_csv(res.epochs));
  }
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  res.params_hash = params_hash(ps);

  nlohmann::json m;
  m["model_config"] = model.config();
  m["train_config"] = tc;
  m["data"] = {{"n_train", n},
               {"content_hash", data_hash(view)},
               {"channels", input_channel_names(model.config())}};
  m["batching"] = {{"effective_batch_size", bs},
                   {"steps_per_epoch", steps_per_epoch},
                   {"last_partial_batch", "dropped"}};
  nlohmann::json ep = nlohmann::json::array();
  for (const auto& e : res.epochs) {
    nlohmann::json row = {{"epoch", e.epoch}};
    if (e.terms.has_phase1) row["L_I"] = e.terms.phase1;
    if (e.terms.has_coarse) row["L_IIc"] = e.terms.coarse;
    if (e.terms.has_fine) row["L_IIf"] = e.terms.fine;
    row["L_III"] = e.terms.fusion;
    row["total"] = e.terms.total;
    row["seconds"] = e.seconds;
    ep.push_back(row);
  }
  m["epochs"] = ep;
  m["wall_seconds"] = res.wall_seconds;
  m["environment"] = environment_fingerprint();
  m["params_hash"] = res.params_hash;
  m["parameter_paths"] = ps.names();
  for (auto it = out.extra_manifest.begin(); it != out.extra_manifest.end(); ++it)
    m[it.key()] = it.value();
  res.manifest = m;
  if (out.out_dir) {
    save_checkpoint(ps, model.config(), *out.out_dir / "model.ckpt", {{"train_config", tc}});
    io::write_file_atomic(*out.out_dir / "manifest.json", m.dump(1));
  }
  return res;
}

/// Mean loss terms over the whole view in eval mode (consecutive batches of
/// `batch_size`; a trailing batch of one row is skipped).
inline LossTerms evaluate_loss(const StagedModel& model, const ParamSet<float>& ps,
                               const EegStore& view, const FeatureBundle& fb, const LossWeights& w,
                               Index batch_size) {
  const Mat<float> x = model_input(view, model.config());
  LossTerms acc;
  double rows = 0;
  for (Index start = 0; start < x.rows(); start += batch_size) {
    const Index b = std::min(batch_size, x.rows() - start);
    if (b < 2) break;
    std::vector<std::string> s(view.stimulus_ids.begin() + start, view.stimulus_ids.begin() + start + b);
    std::vector<std::string> c(view.class_ids.begin() + start, view.class_ids.begin() + start + b);
    LossTerms t = batch_loss(model, ps, Mat<float>(x.middleRows(start, b)), gather_targets(fb, s, c),
                             w, ForwardOptions::eval());
    detail::scale(t, static_cast<double>(b));
    detail::accumulate(acc, t);
    rows += static_cast<double>(b);
  }
  if (rows > 0) detail::scale(acc, 1.0 / rows);
  return acc;
}

/// Rebuilds the model described by a checkpoint and fills `ps` with its
/// values. The stored parameter table must match the layout exactly.
inline StagedModel restore_model(const Checkpoint& ck, ParamSet<float>& ps) {
  StagedModel model(ck.config, ps);
  require<ShapeMismatchError>(ps.names() == ck.params.names(),
                              "checkpoint parameter table does not match its model config");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    require<ShapeMismatchError>(ps[i].rows() == ck.params[i].rows() && ps[i].cols() == ck.params[i].cols(),
                                "checkpoint shape mismatch for ", ps.name(i));
    ps[i] = ck.params[i];
  }
  return model;
}

}  // namespace neurostage
