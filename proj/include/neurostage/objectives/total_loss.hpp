#pragma once

#include "neurostage/model/staged_model.hpp"
#include "neurostage/objectives/contrastive.hpp"

#include <nlohmann/json.hpp>

namespace neurostage {

struct LossWeights {
  double alpha1 = 0.1;  // Phase I
  double alpha2 = 0.2;  // Phase II coarse + fine
  double alpha3 = 0.5;  // Phase III

  void validate() const {
    require<ConfigError>(alpha1 >= 0 && alpha2 >= 0 && alpha3 >= 0,
                         "loss weights must be non-negative");
  }
  bool operator==(const LossWeights&) const = default;
};

inline void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"alpha1", w.alpha1}, {"alpha2", w.alpha2}, {"alpha3", w.alpha3}};
}
inline void from_json(const nlohmann::json& j, LossWeights& w) {
  if (j.contains("alpha1")) j.at("alpha1").get_to(w.alpha1);
  if (j.contains("alpha2")) j.at("alpha2").get_to(w.alpha2);
  if (j.contains("alpha3")) j.at("alpha3").get_to(w.alpha3);
}

/// Row-aligned image/text targets for one batch.
template <class S>
struct AlignmentTargets {
  Mat<S> v1;        // projected + normalized low-level image features
  Mat<S> t_coarse;  // class text features
  Mat<S> v_fine;    // projected + normalized high-level image features
  Mat<S> v_image;   // final image features
};

/// Raw per-term losses (0 for terms the model does not have) and the weighted
/// total.
struct LossTerms {
  double phase1 = 0.0;
  double coarse = 0.0;
  double fine = 0.0;
  double fusion = 0.0;
  double total = 0.0;
  bool has_phase1 = false, has_coarse = false, has_fine = false;

  double recombine(const LossWeights& w) const {
    return w.alpha1 * phase1 + w.alpha2 * (coarse + fine) + w.alpha3 * fusion;
  }
};

template <class S>
struct LossGradients {
  StageEmbeddings<S> embeddings;
  AlignmentTargets<S> targets;
};

/// Weighted multi-level objective. When `g` is given, gradients w.r.t. the
/// logit scales are accumulated into it and embedding/target gradients are
/// written to `lg`.
template <class S>
LossTerms total_loss(const StagedModel& model, const ParamSet<S>& ps,
                     const StageEmbeddings<S>& emb, const AlignmentTargets<S>& tgt,
                     const LossWeights& w, Grads<S>* g = nullptr, LossGradients<S>* lg = nullptr) {
  w.validate();
  const ModelConfig& cfg = model.config();
  const bool want = g != nullptr && lg != nullptr;
  LossTerms out;
  if (want) *lg = LossGradients<S>{};

  auto term = [&](const char* level, const std::string& site, const Mat<S>& e, const Mat<S>& t,
                  double alpha, Mat<S>* de, Mat<S>* dt) -> double {
    if (t.size() == 0)
      throw ProtocolError(detail::concat("missing target features for level '", level, "'"));
    require(e.rows() == t.rows(), "level '", level, "': ", e.rows(), " embeddings vs ", t.rows(),
            " targets");
    const ParamId rid = ps.id(model.logit_path(site));
    const double rho = static_cast<double>(ps[rid](0, 0));
    auto r = clip_loss(e, t, rho, want);
    if (want) {
      *de = r.dx * static_cast<S>(alpha);
      *dt = r.dy * static_cast<S>(alpha);
      (*g)[rid](0, 0) += static_cast<S>(alpha * r.drho);
    }
    return r.loss;
  };

  if (cfg.phase1) {
    out.has_phase1 = true;
    out.phase1 = term("low", "phase1", emb.e1, tgt.v1, w.alpha1,
                      want ? &lg->embeddings.e1 : nullptr, want ? &lg->targets.v1 : nullptr);
  }
  if (cfg.has_coarse()) {
    out.has_coarse = true;
    out.coarse = term("text", "coarse", emb.e_coarse, tgt.t_coarse, w.alpha2,
                      want ? &lg->embeddings.e_coarse : nullptr,
                      want ? &lg->targets.t_coarse : nullptr);
  }
  if (cfg.has_fine()) {
    out.has_fine = true;
    out.fine = term("high", "fine", emb.e_fine, tgt.v_fine, w.alpha2,
                    want ? &lg->embeddings.e_fine : nullptr, want ? &lg->targets.v_fine : nullptr);
  }
  out.fusion = term("final", "fusion", emb.e_eeg, tgt.v_image, w.alpha3,
                    want ? &lg->embeddings.e_eeg : nullptr, want ? &lg->targets.v_image : nullptr);
  out.total = out.recombine(w);
  return out;
}

}  // namespace neurostage
