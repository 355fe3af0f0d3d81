#pragma once

#include "neurostage/model/staged_model.hpp"

#include <iomanip>
#include <sstream>

namespace neurostage {

/// Parameter and per-sample cost of one module.
struct ModuleCost {
  std::string name;
  std::size_t params = 0;
  std::size_t macs = 0;
  std::size_t elementwise = 0;  // activation / normalization / residual ops
  bool image_side = false;      // runs once per gallery item, not per EEG trial
  std::size_t flops() const { return 2 * macs + elementwise; }
};

struct ComplexityReport {
  std::vector<ModuleCost> modules;

  std::size_t total_params() const {
    std::size_t n = 0;
    for (const auto& m : modules) n += m.params;
    return n;
  }
  std::size_t eeg_params() const {
    std::size_t n = 0;
    for (const auto& m : modules)
      if (!m.image_side) n += m.params;
    return n;
  }
  // EEG-side cost of one forward pass.
  std::size_t eeg_macs() const {
    std::size_t n = 0;
    for (const auto& m : modules)
      if (!m.image_side) n += m.macs;
    return n;
  }
  std::size_t eeg_flops() const {
    std::size_t n = 0;
    for (const auto& m : modules)
      if (!m.image_side) n += m.flops();
    return n;
  }
  const ModuleCost& at(const std::string& name) const {
    for (const auto& m : modules)
      if (m.name == name) return m;
    throw ArgumentError("no module '" + name + "' in complexity report");
  }
};

// Reference figures quoted for the published model; informational only.
inline constexpr double kReferenceParamsM = 10.6;
inline constexpr double kReferenceMMacs = 12.2;
inline constexpr double kReferenceMFlops = 24.5;

namespace detail {

inline std::size_t params_with_prefix(const ParamSet<float>& ps, const std::string& prefix) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (ps.name(i).rfind(prefix, 0) == 0) n += static_cast<std::size_t>(ps[i].size());
  return n;
}

// Softmax over n logits: exp, sum, divide.
inline std::size_t softmax_ops(std::size_t n) { return 3 * n; }
// LayerNorm over d: mean, centre, square, variance, scale, affine.
inline std::size_t layernorm_ops(std::size_t d) { return 6 * d; }

inline std::size_t gat_elementwise(std::size_t n, std::size_t f) {
  const std::size_t edges = n * (n - 1);
  return edges /*LeakyReLU*/ + softmax_ops(edges) + n * f /*bias*/;
}

inline std::size_t block_elementwise(std::size_t c, std::size_t t) {
  // reweight (mul + add), two GAT views, inner residual, outer residual
  return 2 * c * t + gat_elementwise(c, t) + gat_elementwise(t, c) + 2 * c * t;
}

}  // namespace detail

/// Per-module parameter counts (summed from the parameter set) and analytic
/// per-sample MACs. Affine in->out: in*out MACs. Graph attention over n nodes
/// with f features: n f^2 (projection) + 2 n f (scores) + n (n-1) f
/// (aggregation). FLOPs = 2 MACs + elementwise operations.
inline ComplexityReport count_complexity(const StagedModel& model, const ParamSet<float>& ps) {
  const ModelConfig& cfg = model.config();
  const auto t = static_cast<std::size_t>(cfg.n_timesteps);
  const auto cv = static_cast<std::size_t>(cfg.n_visual_channels);
  const auto cj = static_cast<std::size_t>(cfg.joint_channels());
  const auto dl = static_cast<std::size_t>(cfg.d_low);
  const auto ds = static_cast<std::size_t>(cfg.d_sem);
  const auto h = static_cast<std::size_t>(cfg.temporal_hidden);
  ComplexityReport r;
  auto add = [&](const std::string& name, const std::string& prefix, std::size_t macs,
                 std::size_t elem, bool image = false) {
    r.modules.push_back({name, detail::params_with_prefix(ps, prefix), macs, elem, image});
  };
  const std::size_t weighter_elem = h + detail::softmax_ops(t);
  if (cfg.phase1) {
    add("phase1.weighter", "phase1.weighter.", model.weighter(1).macs(), weighter_elem);
    add("phase1.gat", "phase1.gat.", model.block(1).macs(), detail::block_elementwise(cv, t));
    add("phase1.encoder", "phase1.encoder.", model.phase1_encoder().macs(),
        dl /*GELU*/ + detail::layernorm_ops(dl));
  }
  if (cfg.has_slc()) add("slc", "slc.", model.slc().macs(), 0);
  if (cfg.phase2) {
    add("phase2.weighter", "phase2.weighter.", model.weighter(2).macs(), weighter_elem);
    add("phase2.gat", "phase2.gat.", model.block(2).macs(), detail::block_elementwise(cj, t));
  }
  if (cfg.has_coarse()) {
    const auto cc = static_cast<std::size_t>(cfg.coarse_channels());
    add("phase2.coarse", "phase2.coarse.",
        model.coarse_fc().macs() + model.coarse_residual().macs(),
        cc * t /*reweight*/ + ds /*GELU*/ + ds /*residual*/ + detail::layernorm_ops(ds));
  }
  if (cfg.has_fine())
    add("phase2.fine", "phase2.fine.", model.fine_fc().macs(), ds + detail::layernorm_ops(ds));
  if (model.fusion_input_dim() > 0)
    add("phase3.fusion", "phase3.fusion.", model.fusion().macs(),
        cfg.has_coarse() ? ds /*additive coarse term*/ : 0);
  if (cfg.phase1)
    add("projector.low", "projector.low.", model.projector("low").macs(), dl + 3 * dl, true);
  if (cfg.has_fine())
    add("projector.high", "projector.high.", model.projector("high").macs(), ds + 3 * ds, true);
  add("logit_scale", "logit_scale.", 0, 0);
  require(r.total_params() == ps.count(), "complexity modules cover ", r.total_params(), " of ",
          ps.count(), " parameters");
  return r;
}

inline std::string complexity_table(const ComplexityReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(18) << "module" << std::right << std::setw(12) << "params"
     << std::setw(14) << "MACs" << std::setw(14) << "FLOPs" << "\n";
  for (const auto& m : r.modules)
    os << std::left << std::setw(18) << m.name << std::right << std::setw(12) << m.params
       << std::setw(14) << m.macs << std::setw(14) << m.flops() << (m.image_side ? "  (image side)" : "")
       << "\n";
  os << std::fixed << std::setprecision(3);
  os << "total params " << r.total_params() << " (" << r.total_params() / 1e6 << " M)\n";
  os << "EEG side     " << r.eeg_params() << " params (" << r.eeg_params() / 1e6 << " M)\n";
  os << "EEG forward  " << r.eeg_macs() / 1e6 << " MMACs, " << r.eeg_flops() / 1e6 << " MFLOPs\n";
  os << std::setprecision(1) << "reference    " << kReferenceParamsM << " M params, "
     << kReferenceMMacs << " MMACs, " << kReferenceMFlops
     << " MFLOPs (informational; composition not specified)\n";
  return os.str();
}

}  // namespace neurostage
