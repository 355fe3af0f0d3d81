#pragma once

#include "neurostage/common.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace neurostage {

enum class GatOrder { channel_first, temporal_first, parallel_sum };

// Where the extra Phase-II channels come from.
enum class LatentSource {
  generated,  // learned projection of the visual channels
  real,       // 12 recorded language-related channels supplied with the input
  none,       // Phase II runs on the visual channels only
};

inline const char* to_string(GatOrder o) {
  switch (o) {
    case GatOrder::channel_first: return "channel_first";
    case GatOrder::temporal_first: return "temporal_first";
    case GatOrder::parallel_sum: return "parallel_sum";
  }
  return "?";
}

inline GatOrder gat_order_from_string(const std::string& s) {
  if (s == "channel_first") return GatOrder::channel_first;
  if (s == "temporal_first") return GatOrder::temporal_first;
  if (s == "parallel_sum") return GatOrder::parallel_sum;
  throw ConfigError("unknown gat_order '" + s + "'");
}

inline const char* to_string(LatentSource s) {
  switch (s) {
    case LatentSource::generated: return "generated";
    case LatentSource::real: return "real";
    case LatentSource::none: return "none";
  }
  return "?";
}

inline LatentSource latent_source_from_string(const std::string& s) {
  if (s == "generated") return LatentSource::generated;
  if (s == "real") return LatentSource::real;
  if (s == "none") return LatentSource::none;
  throw ConfigError("unknown latent_source '" + s + "'");
}

/// Architecture hyper-parameters. Defaults reproduce the reference
/// configuration (17 visual + 12 latent channels, T = 175, 256/1024 widths).
struct ModelConfig {
  Index n_visual_channels = 17;
  Index n_latent_channels = 12;
  Index n_timesteps = 175;
  Index d_low = 256;
  Index d_sem = 1024;
  Index temporal_hidden = 128;
  double dropout_coarse = 0.1;
  Index gat_heads = 1;
  GatOrder gat_order = GatOrder::channel_first;
  // Multiplies the softmax temporal weights; 1 follows the equations, T
  // rescales them to mean 1.
  Index temporal_weight_scale = 1;
  bool shared_logit_scale = false;
  double layer_norm_eps = 1e-5;
  double gat_negative_slope = 0.2;
  double logit_scale_init = std::log(1.0 / 0.07);

  // Structure switches used by the ablation registry. All on = full model.
  bool phase1 = true;
  bool phase2 = true;
  bool coarse_branch = true;
  bool fine_branch = true;
  LatentSource latent_source = LatentSource::generated;

  void validate() const {
    require<ConfigError>(n_visual_channels >= 1, "n_visual_channels must be >= 1");
    require<ConfigError>(n_latent_channels >= 1, "n_latent_channels must be >= 1");
    require<ConfigError>(n_timesteps >= 1, "n_timesteps must be >= 1");
    require<ConfigError>(d_low > 0 && d_sem > 0, "embedding dims must be positive");
    require<ConfigError>(temporal_hidden >= 1, "temporal_hidden must be >= 1");
    require<ConfigError>(dropout_coarse >= 0.0 && dropout_coarse < 1.0,
                         "dropout_coarse must lie in [0, 1)");
    require<ConfigError>(gat_heads == 1, "only single-head graph attention is supported");
    require<ConfigError>(temporal_weight_scale == 1 || temporal_weight_scale == n_timesteps,
                         "temporal_weight_scale must be 1 or T");
    require<ConfigError>(phase1 || phase2, "at least one of Phase I / Phase II must be enabled");
    require<ConfigError>(!phase2 || coarse_branch || fine_branch,
                         "Phase II needs at least one semantic branch");
  }

  // Channels seen by the Phase-II encoder.
  Index joint_channels() const {
    return latent_source == LatentSource::none ? n_visual_channels
                                               : n_visual_channels + n_latent_channels;
  }
  // Channels read by the coarse head (latent block, or visual when none).
  Index coarse_channels() const {
    return latent_source == LatentSource::none ? n_visual_channels : n_latent_channels;
  }
  // Channels the model expects on input.
  Index input_channels() const {
    return (phase2 && latent_source == LatentSource::real) ? n_visual_channels + n_latent_channels
                                                           : n_visual_channels;
  }
  bool has_slc() const { return phase2 && latent_source == LatentSource::generated; }
  bool has_coarse() const { return phase2 && coarse_branch; }
  bool has_fine() const { return phase2 && fine_branch; }

  bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"n_visual_channels", c.n_visual_channels},
                     {"n_latent_channels", c.n_latent_channels},
                     {"n_timesteps", c.n_timesteps},
                     {"d_low", c.d_low},
                     {"d_sem", c.d_sem},
                     {"temporal_hidden", c.temporal_hidden},
                     {"dropout_coarse", c.dropout_coarse},
                     {"gat_heads", c.gat_heads},
                     {"gat_order", to_string(c.gat_order)},
                     {"temporal_weight_scale", c.temporal_weight_scale},
                     {"shared_logit_scale", c.shared_logit_scale},
                     {"layer_norm_eps", c.layer_norm_eps},
                     {"gat_negative_slope", c.gat_negative_slope},
                     {"logit_scale_init", c.logit_scale_init},
                     {"phase1", c.phase1},
                     {"phase2", c.phase2},
                     {"coarse_branch", c.coarse_branch},
                     {"fine_branch", c.fine_branch},
                     {"latent_source", to_string(c.latent_source)}};
}

// Missing keys keep their defaults, so partial config files are valid.
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("n_visual_channels", c.n_visual_channels);
  get("n_latent_channels", c.n_latent_channels);
  get("n_timesteps", c.n_timesteps);
  get("d_low", c.d_low);
  get("d_sem", c.d_sem);
  get("temporal_hidden", c.temporal_hidden);
  get("dropout_coarse", c.dropout_coarse);
  get("gat_heads", c.gat_heads);
  if (j.contains("gat_order")) c.gat_order = gat_order_from_string(j.at("gat_order"));
  get("temporal_weight_scale", c.temporal_weight_scale);
  get("shared_logit_scale", c.shared_logit_scale);
  get("layer_norm_eps", c.layer_norm_eps);
  get("gat_negative_slope", c.gat_negative_slope);
  get("logit_scale_init", c.logit_scale_init);
  get("phase1", c.phase1);
  get("phase2", c.phase2);
  get("coarse_branch", c.coarse_branch);
  get("fine_branch", c.fine_branch);
  if (j.contains("latent_source"))
    c.latent_source = latent_source_from_string(j.at("latent_source"));
}

}  // namespace neurostage
