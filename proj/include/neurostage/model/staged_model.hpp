#pragma once

#include "neurostage/model/config.hpp"
#include "neurostage/model/graph_attention.hpp"
#include "neurostage/model/layers.hpp"
#include "neurostage/model/params.hpp"

#include <optional>
#include <string>
#include <vector>

namespace neurostage {

enum class Mode { train, eval };

struct ForwardOptions {
  // Must be set explicitly; the coarse head behaves differently per mode.
  std::optional<Mode> mode;
  std::uint64_t dropout_seed = 0;

  static ForwardOptions eval() { return {Mode::eval, 0}; }
  static ForwardOptions train(std::uint64_t seed) { return {Mode::train, seed}; }
};

/// The four embeddings produced by one forward pass. Branches removed by an
/// ablation are left empty (0 x 0).
template <class S>
struct StageEmbeddings {
  Mat<S> e1;        // B x d_low
  Mat<S> e_coarse;  // B x d_sem
  Mat<S> e_fine;    // B x d_sem
  Mat<S> e_eeg;     // B x d_sem
};

/// Affine map from the 17 visual channels to the latent channels, applied
/// independently at every time step.
struct SlcProjection {
  ParamId weight = 0;  // latent x visual
  ParamId bias = 0;    // 1 x latent
  Index visual = 0;
  Index latent = 0;
  Index timesteps = 0;

  template <class S>
  static SlcProjection make(ParamSet<S>& ps, const std::string& path, Index visual, Index latent,
                            Index timesteps) {
    SlcProjection p;
    p.visual = visual;
    p.latent = latent;
    p.timesteps = timesteps;
    p.weight = ps.add(path + ".weight", latent, visual);
    p.bias = ps.add(path + ".bias", 1, latent);
    return p;
  }

  template <class S>
  void init(ParamSet<S>& ps, Rng& rng) const {
    init_uniform_fan_in(ps[weight], visual, rng);
    init_uniform_fan_in(ps[bias], visual, rng);
  }

  template <class S>
  Mat<S> forward(const ParamSet<S>& ps, const Mat<S>& ev) const {
    require(ev.cols() == visual * timesteps, "latent channel projection expects ", visual,
            " channels x ", timesteps, " steps, got ", ev.cols(), " values");
    Mat<S> out(ev.rows(), latent * timesteps);
    for (Index b = 0; b < ev.rows(); ++b) {
      const Eigen::Map<const Mat<S>> x(ev.row(b).data(), visual, timesteps);
      Mat<S> y = ps[weight] * x;
      y.colwise() += ps[bias].row(0).transpose();
      out.row(b) = Eigen::Map<const RowVec<S>>(y.data(), latent * timesteps);
    }
    return out;
  }

  template <class S>
  Mat<S> backward(const ParamSet<S>& ps, const Mat<S>& ev, const Mat<S>& dout,
                  Grads<S>& g) const {
    Mat<S> dev(ev.rows(), visual * timesteps);
    for (Index b = 0; b < ev.rows(); ++b) {
      const Eigen::Map<const Mat<S>> x(ev.row(b).data(), visual, timesteps);
      const Eigen::Map<const Mat<S>> dy(dout.row(b).data(), latent, timesteps);
      g[weight].noalias() += dy * x.transpose();
      g[bias].row(0) += dy.rowwise().sum().transpose();
      const Mat<S> dx = ps[weight].transpose() * dy;
      dev.row(b) = Eigen::Map<const RowVec<S>>(dx.data(), visual * timesteps);
    }
    return dev;
  }

  std::size_t param_count() const { return static_cast<std::size_t>(latent * visual + latent); }
  std::size_t macs() const { return static_cast<std::size_t>(latent * visual * timesteps); }
};

/// Linear + ReLU + Linear, used on the image side before L2 normalization.
struct Projector {
  Linear fc1;
  Linear fc2;

  template <class S>
  static Projector make(ParamSet<S>& ps, const std::string& path, Index dim) {
    return {Linear::make(ps, path + ".fc1", dim, dim), Linear::make(ps, path + ".fc2", dim, dim)};
  }
  template <class S>
  void init(ParamSet<S>& ps, Rng& rng) const {
    fc1.init(ps, rng);
    fc2.init(ps, rng);
  }
  std::size_t param_count() const { return fc1.param_count() + fc2.param_count(); }
  std::size_t macs() const { return fc1.macs() + fc2.macs(); }
};

template <class S>
struct ProjectionCache {
  Mat<S> x, h, a, y, out;
};

/// Intermediate activations of one forward pass, consumed by backward().
template <class S>
struct ForwardCache {
  Index batch = 0;
  Mat<S> input;
  Mat<S> ev;  // visual channels
  // Phase I
  TemporalWeighter::Cache<S> w1c;
  RowVec<S> w1;
  Mat<S> u1;
  SpatioTemporalBlock::Cache<S> b1c;
  Mat<S> z1, a1, g1;
  LayerNorm::Cache<S> n1c;
  // Phase II
  Mat<S> latent;  // generated or real latent channels (empty for none)
  Mat<S> joint;
  TemporalWeighter::Cache<S> w2c;
  RowVec<S> w2;
  Mat<S> u2;
  SpatioTemporalBlock::Cache<S> b2c;
  Mat<S> e2;
  Mat<S> coarse_in, coarse_weighted, coarse_h, coarse_gh, coarse_mask;
  LayerNorm::Cache<S> ncc;
  Mat<S> fine_a, fine_g;
  LayerNorm::Cache<S> nfc;
  // Phase III
  Mat<S> fusion_in;
  StageEmbeddings<S> out;
};

/// The three-phase staged encoder. Holds layer layout (parameter ids and
/// shapes) only; parameter values live in a ParamSet so a forward pass is a
/// pure function of (params, input, options).
class StagedModel {
 public:
  StagedModel() = default;

  /// Registers every trainable array of `config` in `ps` (which must be empty)
  /// in a fixed order.
  template <class S>
  StagedModel(const ModelConfig& config, ParamSet<S>& ps) : cfg_(config) {
    cfg_.validate();
    require<ConfigError>(ps.size() == 0, "parameter set must be empty");
    const Index t = cfg_.n_timesteps;
    const Index cv = cfg_.n_visual_channels;
    const double slope = cfg_.gat_negative_slope;
    const double eps = cfg_.layer_norm_eps;
    if (cfg_.phase1) {
      weighter1_ = TemporalWeighter::make(ps, "phase1.weighter", t, cfg_.temporal_hidden,
                                          cfg_.temporal_weight_scale);
      block1_ = SpatioTemporalBlock::make(ps, "phase1.gat", cv, t, cfg_.gat_order, slope);
      enc1_ = Linear::make(ps, "phase1.encoder.fc", cv * t, cfg_.d_low);
      norm1_ = LayerNorm::make(ps, "phase1.encoder.norm", cfg_.d_low, eps);
    }
    if (cfg_.has_slc()) slc_ = SlcProjection::make(ps, "slc", cv, cfg_.n_latent_channels, t);
    if (cfg_.phase2) {
      weighter2_ = TemporalWeighter::make(ps, "phase2.weighter", t, cfg_.temporal_hidden,
                                          cfg_.temporal_weight_scale);
      block2_ = SpatioTemporalBlock::make(ps, "phase2.gat", cfg_.joint_channels(), t,
                                          cfg_.gat_order, slope);
    }
    if (cfg_.has_coarse()) {
      coarse_fc_ = Linear::make(ps, "phase2.coarse.fc", cfg_.coarse_channels() * t, cfg_.d_sem);
      coarse_res_ = Linear::make(ps, "phase2.coarse.residual_fc", cfg_.d_sem, cfg_.d_sem);
      coarse_norm_ = LayerNorm::make(ps, "phase2.coarse.norm", cfg_.d_sem, eps);
    }
    if (cfg_.has_fine()) {
      fine_fc_ = Linear::make(ps, "phase2.fine.fc", cfg_.joint_channels() * t, cfg_.d_sem);
      fine_norm_ = LayerNorm::make(ps, "phase2.fine.norm", cfg_.d_sem, eps);
    }
    const Index fusion_in = fusion_input_dim();
    if (fusion_in > 0) fusion_ = Linear::make(ps, "phase3.fusion", fusion_in, cfg_.d_sem);
    if (cfg_.phase1) proj_low_ = Projector::make(ps, "projector.low", cfg_.d_low);
    if (cfg_.has_fine()) proj_high_ = Projector::make(ps, "projector.high", cfg_.d_sem);
    for (const auto& site : logit_sites()) ps.add("logit_scale." + site, 1, 1);
  }

  const ModelConfig& config() const { return cfg_; }

  Index fusion_input_dim() const {
    return (cfg_.phase1 ? cfg_.d_low : 0) + (cfg_.has_fine() ? cfg_.d_sem : 0);
  }

  // Loss sites that have a learnable logit scale.
  std::vector<std::string> logit_sites() const {
    if (cfg_.shared_logit_scale) return {"shared"};
    std::vector<std::string> s;
    if (cfg_.phase1) s.push_back("phase1");
    if (cfg_.has_coarse()) s.push_back("coarse");
    if (cfg_.has_fine()) s.push_back("fine");
    s.push_back("fusion");
    return s;
  }
  std::string logit_path(const std::string& site) const {
    return cfg_.shared_logit_scale ? "logit_scale.shared" : "logit_scale." + site;
  }

  template <class S>
  void init(ParamSet<S>& ps, std::uint64_t seed) const {
    Rng rng(seed);
    if (cfg_.phase1) {
      weighter1_.init(ps, rng);
      block1_.init(ps, rng);
      enc1_.init(ps, rng);
      norm1_.init(ps);
    }
    if (cfg_.has_slc()) slc_.init(ps, rng);
    if (cfg_.phase2) {
      weighter2_.init(ps, rng);
      block2_.init(ps, rng);
    }
    if (cfg_.has_coarse()) {
      coarse_fc_.init(ps, rng);
      coarse_res_.init(ps, rng);
      coarse_norm_.init(ps);
    }
    if (cfg_.has_fine()) {
      fine_fc_.init(ps, rng);
      fine_norm_.init(ps);
    }
    if (fusion_input_dim() > 0) fusion_.init(ps, rng);
    if (cfg_.phase1) proj_low_.init(ps, rng);
    if (cfg_.has_fine()) proj_high_.init(ps, rng);
    for (const auto& site : logit_sites())
      ps.at(logit_path(site)).setConstant(static_cast<S>(cfg_.logit_scale_init));
  }

  // ---- individual stage maps -------------------------------------------

  template <class S>
  RowVec<S> temporal_weights(const ParamSet<S>& ps, int phase, Index timesteps) const {
    require<ConfigError>(timesteps == cfg_.n_timesteps, "temporal weighter configured for T = ",
                         cfg_.n_timesteps, ", requested T = ", timesteps);
    require<ConfigError>((phase == 1 && cfg_.phase1) || (phase == 2 && cfg_.phase2),
                         "no temporal weighter for phase ", phase);
    return (phase == 1 ? weighter1_ : weighter2_).forward(ps);
  }

  template <class S>
  Mat<S> slc_generate(const ParamSet<S>& ps, const Mat<S>& ev) const {
    require<ConfigError>(cfg_.has_slc(), "this model has no latent channel projection");
    require_finite(ev, "visual EEG");
    return slc_.forward(ps, ev);
  }

  template <class S>
  Mat<S> rst_gat_forward(const ParamSet<S>& ps, const Mat<S>& x, int phase) const {
    return block(phase).forward(ps, x);
  }

  template <class S>
  Mat<S> encode_phase1(const ParamSet<S>& ps, const Mat<S>& ev) const {
    ForwardCache<S> c;
    c.ev = ev;
    c.batch = ev.rows();
    run_phase1(ps, c);
    return c.out.e1;
  }

  /// Returns the encoded joint tensor; `visual_part` / `latent_part` split it
  /// by channel order.
  template <class S>
  Mat<S> encode_phase2(const ParamSet<S>& ps, const Mat<S>& joint) const {
    require<ConfigError>(cfg_.phase2, "Phase II disabled");
    require(joint.cols() == cfg_.joint_channels() * cfg_.n_timesteps, "Phase II expects ",
            cfg_.joint_channels(), " channels, got ", joint.cols() / cfg_.n_timesteps);
    ForwardCache<S> c;
    c.batch = joint.rows();
    c.joint = joint;
    run_phase2_encoder(ps, c);
    return c.e2;
  }

  template <class S>
  Mat<S> visual_part(const Mat<S>& e2) const {
    return e2.leftCols(cfg_.n_visual_channels * cfg_.n_timesteps);
  }
  template <class S>
  Mat<S> latent_part(const Mat<S>& e2) const {
    return e2.rightCols(e2.cols() - cfg_.n_visual_channels * cfg_.n_timesteps);
  }
  template <class S>
  Mat<S> concat_channels(const Mat<S>& visual, const Mat<S>& latent) const {
    Mat<S> out(visual.rows(), visual.cols() + latent.cols());
    out << visual, latent;
    return out;
  }

  template <class S>
  Mat<S> coarse_embed(const ParamSet<S>& ps, const Mat<S>& coarse_in, const RowVec<S>& w2,
                      const ForwardOptions& opt) const {
    require<ConfigError>(cfg_.has_coarse(), "coarse branch disabled");
    require<ConfigError>(opt.mode.has_value(), "coarse head needs an explicit train/eval mode");
    ForwardCache<S> c;
    c.batch = coarse_in.rows();
    c.w2 = w2;
    c.coarse_in = coarse_in;
    run_coarse(ps, c, opt);
    return c.out.e_coarse;
  }

  template <class S>
  Mat<S> fine_embed(const ParamSet<S>& ps, const Mat<S>& e2) const {
    require<ConfigError>(cfg_.has_fine(), "fine branch disabled");
    ForwardCache<S> c;
    c.batch = e2.rows();
    c.e2 = e2;
    run_fine(ps, c);
    return c.out.e_fine;
  }

  template <class S>
  Mat<S> fuse_phase3(const ParamSet<S>& ps, const Mat<S>& e1, const Mat<S>& e_fine,
                     const Mat<S>& e_coarse) const {
    ForwardCache<S> c;
    c.batch = std::max({e1.rows(), e_fine.rows(), e_coarse.rows()});
    c.out.e1 = e1;
    c.out.e_fine = e_fine;
    c.out.e_coarse = e_coarse;
    run_fusion(ps, c);
    return c.out.e_eeg;
  }

  // ---- whole model -----------------------------------------------------

  template <class S>
  StageEmbeddings<S> forward_all(const ParamSet<S>& ps, const Mat<S>& input,
                                 const ForwardOptions& opt) const {
    ForwardCache<S> c;
    forward(ps, input, opt, c);
    return std::move(c.out);
  }

  template <class S>
  void forward(const ParamSet<S>& ps, const Mat<S>& input, const ForwardOptions& opt,
               ForwardCache<S>& c) const {
    require<ConfigError>(opt.mode.has_value(), "forward pass needs an explicit train/eval mode");
    const Index t = cfg_.n_timesteps;
    require(input.rows() >= 1, "empty batch");
    require(input.cols() == cfg_.input_channels() * t, "model expects input of ",
            cfg_.input_channels(), " channels x ", t, " steps, got ", input.cols(), " values");
    require_finite(input, "EEG input");
    c = ForwardCache<S>{};
    c.batch = input.rows();
    c.input = input;
    c.ev = input.leftCols(cfg_.n_visual_channels * t);
    if (cfg_.phase1) run_phase1(ps, c);
    if (cfg_.phase2) {
      switch (cfg_.latent_source) {
        case LatentSource::generated: c.latent = slc_.forward(ps, c.ev); break;
        case LatentSource::real: c.latent = input.rightCols(cfg_.n_latent_channels * t); break;
        case LatentSource::none: c.latent.resize(c.batch, 0); break;
      }
      c.joint = concat_channels(c.ev, c.latent);
      run_phase2_encoder(ps, c);
      if (cfg_.has_coarse()) {
        c.coarse_in = cfg_.latent_source == LatentSource::none ? visual_part(c.e2)
                                                               : latent_part(c.e2);
        run_coarse(ps, c, opt);
      }
      if (cfg_.has_fine()) run_fine(ps, c);
    }
    run_fusion(ps, c);
  }

  /// Back-propagates embedding gradients (empty matrices = no gradient) into
  /// `g`; returns the gradient w.r.t. the model input.
  template <class S>
  Mat<S> backward(const ParamSet<S>& ps, const ForwardCache<S>& c, const StageEmbeddings<S>& d,
                  Grads<S>& g) const {
    const Index t = cfg_.n_timesteps;
    const Index b = c.batch;
    auto or_zero = [&](const Mat<S>& m, Index cols) {
      return m.size() ? m : Mat<S>(Mat<S>::Zero(b, cols));
    };
    Mat<S> de1 = cfg_.phase1 ? or_zero(d.e1, cfg_.d_low) : Mat<S>();
    Mat<S> def = cfg_.has_fine() ? or_zero(d.e_fine, cfg_.d_sem) : Mat<S>();
    Mat<S> dec = cfg_.has_coarse() ? or_zero(d.e_coarse, cfg_.d_sem) : Mat<S>();
    const Mat<S> deeg = or_zero(d.e_eeg, cfg_.d_sem);

    // Phase III
    if (fusion_input_dim() > 0) {
      const Mat<S> dfin = fusion_.backward(ps, c.fusion_in, deeg, g);
      Index off = 0;
      if (cfg_.phase1) {
        de1 += dfin.leftCols(cfg_.d_low);
        off = cfg_.d_low;
      }
      if (cfg_.has_fine()) def += dfin.middleCols(off, cfg_.d_sem);
    }
    if (cfg_.has_coarse()) dec += deeg;

    Mat<S> dinput = Mat<S>::Zero(b, c.input.cols());
    const Index vis = cfg_.n_visual_channels * t;

    if (cfg_.phase2) {
      Mat<S> de2 = Mat<S>::Zero(b, cfg_.joint_channels() * t);
      RowVec<S> dw2 = RowVec<S>::Zero(t);
      if (cfg_.has_fine()) {
        const Mat<S> dg = fine_norm_.backward(ps, c.nfc, def, g);
        de2 += fine_fc_.backward(ps, c.e2, gelu_backward(c.fine_a, dg), g);
      }
      if (cfg_.has_coarse()) {
        const Mat<S> dr = coarse_norm_.backward(ps, c.ncc, dec, g);
        Mat<S> dh = dr;
        Mat<S> dres = dr;
        if (c.coarse_mask.size()) dres = dres.cwiseProduct(c.coarse_mask);
        dh += gelu_backward(c.coarse_h, coarse_res_.backward(ps, c.coarse_gh, dres, g));
        const Mat<S> dweighted = coarse_fc_.backward(ps, c.coarse_weighted, dh, g);
        const Index cc = cfg_.coarse_channels();
        Mat<S> dcin(b, cc * t);
        for (Index r = 0; r < b; ++r)
          for (Index ch = 0; ch < cc; ++ch)
            for (Index k = 0; k < t; ++k) {
              const Index i = ch * t + k;
              dcin(r, i) = dweighted(r, i) * c.w2(k);
              dw2(k) += dweighted(r, i) * c.coarse_in(r, i);
            }
        if (cfg_.latent_source == LatentSource::none)
          de2.leftCols(vis) += dcin;
        else
          de2.rightCols(de2.cols() - vis) += dcin;
      }
      // e2 = joint + Delta(reweight(joint))
      const Mat<S> du2 = block2_.update_backward(ps, c.b2c, de2, g);
      Mat<S> djoint = de2 + temporal_reweight_backward(c.joint, c.w2, cfg_.joint_channels(), du2, dw2);
      weighter2_.backward(ps, c.w2c, dw2, g);
      dinput.leftCols(vis) += djoint.leftCols(vis);
      const Mat<S> dlatent = djoint.rightCols(djoint.cols() - vis);
      if (cfg_.latent_source == LatentSource::generated)
        dinput.leftCols(vis) += slc_.backward(ps, c.ev, dlatent, g);
      else if (cfg_.latent_source == LatentSource::real)
        dinput.rightCols(cfg_.n_latent_channels * t) += dlatent;
    }

    if (cfg_.phase1) {
      const Mat<S> dg = norm1_.backward(ps, c.n1c, de1, g);
      const Mat<S> dz = enc1_.backward(ps, c.z1, gelu_backward(c.a1, dg), g);
      RowVec<S> dw1 = RowVec<S>::Zero(t);
      const Mat<S> du1 = block1_.update_backward(ps, c.b1c, dz, g);
      dinput.leftCols(vis) +=
          dz + temporal_reweight_backward(c.ev, c.w1, cfg_.n_visual_channels, du1, dw1);
      weighter1_.backward(ps, c.w1c, dw1, g);
    }
    return dinput;
  }

  // ---- image side --------------------------------------------------------

  /// Projects raw backbone features with a trainable projector, then
  /// L2-normalizes. `level` is "low" or "high".
  template <class S>
  Mat<S> project(const ParamSet<S>& ps, const std::string& level, const Mat<S>& raw,
                 ProjectionCache<S>* cache = nullptr) const {
    const Projector& p = projector(level);
    ProjectionCache<S> local;
    ProjectionCache<S>& c = cache ? *cache : local;
    c.x = raw;
    c.h = p.fc1.forward(ps, raw);
    c.a = relu(c.h);
    c.y = p.fc2.forward(ps, c.a);
    c.out = l2_normalize_rows(c.y, "projected image features");
    return c.out;
  }

  template <class S>
  void project_backward(const ParamSet<S>& ps, const std::string& level,
                        const ProjectionCache<S>& c, const Mat<S>& dout, Grads<S>& g) const {
    const Projector& p = projector(level);
    const Mat<S> dy = l2_normalize_rows_backward(c.y, c.out, dout);
    const Mat<S> da = p.fc2.backward(ps, c.a, dy, g);
    p.fc1.backward(ps, c.x, relu_backward(c.h, da), g);
  }

  bool has_projector(const std::string& level) const {
    return level == "low" ? cfg_.phase1 : (level == "high" && cfg_.has_fine());
  }

  // ---- layer access for complexity accounting -----------------------------

  const TemporalWeighter& weighter(int phase) const { return phase == 1 ? weighter1_ : weighter2_; }
  const SpatioTemporalBlock& block(int phase) const {
    require<ConfigError>((phase == 1 && cfg_.phase1) || (phase == 2 && cfg_.phase2),
                         "no spatiotemporal block for phase ", phase);
    return phase == 1 ? block1_ : block2_;
  }
  const Linear& phase1_encoder() const { return enc1_; }
  const LayerNorm& phase1_norm() const { return norm1_; }
  const SlcProjection& slc() const { return slc_; }
  const Linear& coarse_fc() const { return coarse_fc_; }
  const Linear& coarse_residual() const { return coarse_res_; }
  const LayerNorm& coarse_norm() const { return coarse_norm_; }
  const Linear& fine_fc() const { return fine_fc_; }
  const LayerNorm& fine_norm() const { return fine_norm_; }
  const Linear& fusion() const { return fusion_; }
  const Projector& projector(const std::string& level) const {
    require<ProtocolError>(has_projector(level), "no image projector for level '", level, "'");
    return level == "low" ? proj_low_ : proj_high_;
  }

 private:
  template <class S>
  void run_phase1(const ParamSet<S>& ps, ForwardCache<S>& c) const {
    require<ConfigError>(cfg_.phase1, "Phase I disabled");
    require(c.ev.cols() == cfg_.n_visual_channels * cfg_.n_timesteps, "Phase I expects ",
            cfg_.n_visual_channels, " channels x ", cfg_.n_timesteps, " steps");
    c.w1 = weighter1_.forward(ps, c.w1c);
    c.u1 = temporal_reweight(c.ev, c.w1, cfg_.n_visual_channels);
    c.z1 = c.ev + block1_.update(ps, c.u1, c.b1c);
    c.a1 = enc1_.forward(ps, c.z1);
    c.g1 = gelu(c.a1);
    c.out.e1 = norm1_.forward(ps, c.g1, c.n1c);
  }

  template <class S>
  void run_phase2_encoder(const ParamSet<S>& ps, ForwardCache<S>& c) const {
    c.w2 = weighter2_.forward(ps, c.w2c);
    c.u2 = temporal_reweight(c.joint, c.w2, cfg_.joint_channels());
    c.e2 = c.joint + block2_.update(ps, c.u2, c.b2c);
  }

  template <class S>
  void run_coarse(const ParamSet<S>& ps, ForwardCache<S>& c, const ForwardOptions& opt) const {
    const Index t = cfg_.n_timesteps;
    const Index cc = cfg_.coarse_channels();
    require(c.coarse_in.cols() == cc * t, "coarse head expects ", cc, " channels x ", t,
            " steps");
    require(c.w2.size() == t, "coarse head expects ", t, " temporal weights");
    c.coarse_weighted.resize(c.coarse_in.rows(), cc * t);
    for (Index r = 0; r < c.coarse_in.rows(); ++r)
      for (Index ch = 0; ch < cc; ++ch)
        for (Index k = 0; k < t; ++k)
          c.coarse_weighted(r, ch * t + k) = c.coarse_in(r, ch * t + k) * c.w2(k);
    c.coarse_h = coarse_fc_.forward(ps, c.coarse_weighted);
    c.coarse_gh = gelu(c.coarse_h);
    Mat<S> res = coarse_res_.forward(ps, c.coarse_gh);
    c.coarse_mask.resize(0, 0);
    if (*opt.mode == Mode::train && cfg_.dropout_coarse > 0.0) {
      c.coarse_mask = dropout_mask<S>(res.rows(), res.cols(), cfg_.dropout_coarse,
                                      derive_seed(opt.dropout_seed, 0xC0A45E));
      res = res.cwiseProduct(c.coarse_mask);
    }
    c.out.e_coarse = coarse_norm_.forward(ps, Mat<S>(c.coarse_h + res), c.ncc);
  }

  template <class S>
  void run_fine(const ParamSet<S>& ps, ForwardCache<S>& c) const {
    c.fine_a = fine_fc_.forward(ps, c.e2);
    c.fine_g = gelu(c.fine_a);
    c.out.e_fine = fine_norm_.forward(ps, c.fine_g, c.nfc);
  }

  template <class S>
  void run_fusion(const ParamSet<S>& ps, ForwardCache<S>& c) const {
    const Index b = c.batch;
    if (fusion_input_dim() > 0) {
      c.fusion_in.resize(b, fusion_input_dim());
      Index off = 0;
      if (cfg_.phase1) {
        require(c.out.e1.rows() == b && c.out.e1.cols() == cfg_.d_low, "fusion expects e1 of ",
                b, " x ", cfg_.d_low);
        c.fusion_in.leftCols(cfg_.d_low) = c.out.e1;
        off = cfg_.d_low;
      }
      if (cfg_.has_fine()) {
        require(c.out.e_fine.rows() == b && c.out.e_fine.cols() == cfg_.d_sem,
                "fusion expects e_fine of ", b, " x ", cfg_.d_sem);
        c.fusion_in.middleCols(off, cfg_.d_sem) = c.out.e_fine;
      }
      c.out.e_eeg = fusion_.forward(ps, c.fusion_in);
    } else {
      c.out.e_eeg = Mat<S>::Zero(b, cfg_.d_sem);
    }
    if (cfg_.has_coarse()) {
      require(c.out.e_coarse.rows() == b && c.out.e_coarse.cols() == cfg_.d_sem,
              "fusion expects e_coarse of ", b, " x ", cfg_.d_sem);
      c.out.e_eeg += c.out.e_coarse;
    }
  }

  ModelConfig cfg_;
  TemporalWeighter weighter1_, weighter2_;
  SpatioTemporalBlock block1_, block2_;
  Linear enc1_;
  LayerNorm norm1_;
  SlcProjection slc_;
  Linear coarse_fc_, coarse_res_;
  LayerNorm coarse_norm_;
  Linear fine_fc_;
  LayerNorm fine_norm_;
  Linear fusion_;
  Projector proj_low_, proj_high_;
};

}  // namespace neurostage
