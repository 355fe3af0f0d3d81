#pragma once

#include "neurostage/model/config.hpp"

#include <string>
#include <vector>

namespace neurostage {

struct AblationVariant {
  std::string name;
  ModelConfig config;
  std::string description;
};

inline const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {
      "Ours-All",   "xC-Ori-12",   "xC-Ori-12-xC",  "xC-xSLC",
      "xP-xPhaseI", "xP-xPhaseII", "xP-PhaseII-xF", "xP-PhaseII-xC"};
  return names;
}

/// Applies a named ablation to `base`. Removed branches drop their parameters
/// and loss terms; the fusion affine shrinks to whatever embeddings remain.
inline AblationVariant build_variant(const std::string& name, const ModelConfig& base) {
  AblationVariant v{name, base, ""};
  ModelConfig& c = v.config;
  if (name == "Ours-All") {
    v.description = "full model";
  } else if (name == "xC-Ori-12") {
    c.latent_source = LatentSource::real;
    v.description = "12 real language channels replace the generated latent channels";
  } else if (name == "xC-Ori-12-xC") {
    c.latent_source = LatentSource::real;
    c.coarse_branch = false;
    v.description = "xC-Ori-12 without the coarse branch";
  } else if (name == "xC-xSLC") {
    c.latent_source = LatentSource::none;
    v.description = "visual channels only; coarse head reads the encoded visual channels";
  } else if (name == "xP-xPhaseI") {
    c.phase1 = false;
    v.description = "no Phase I; fusion maps the fine embedding alone";
  } else if (name == "xP-xPhaseII") {
    c.phase2 = false;
    v.description = "no Phase II; fusion maps the Phase-I embedding alone";
  } else if (name == "xP-PhaseII-xF") {
    c.fine_branch = false;
    v.description = "Phase II without the fine branch";
  } else if (name == "xP-PhaseII-xC") {
    c.coarse_branch = false;
    v.description = "Phase II without the coarse branch or the additive coarse term";
  } else {
    std::string known;
    for (const auto& n : variant_names()) known += (known.empty() ? "" : ", ") + n;
    throw ArgumentError("unknown variant '" + name + "' (known: " + known + ")");
  }
  c.validate();
  return v;
}

}  // namespace neurostage
