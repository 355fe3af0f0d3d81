#pragma once

#include "neurostage/features/feature_bundle.hpp"

#include <cstdio>
#include <string>

namespace neurostage {

struct SyntheticFeatureSpec {
  Index n_classes = 20;
  Index images_per_class = 5;
  std::uint64_t seed = 42;
  double sigma_inst = 0.3;
  double sigma_high = 0.1;
  // Class vectors are uniform on the unit sphere of a random `class_rank`
  // dimensional subspace of the semantic space; keeping the rank below the
  // number of training classes is what makes zero-shot transfer learnable.
  Index class_rank = 8;
  // Low-level vectors live in a random `low_rank` subspace of the low space.
  Index low_rank = 16;
  Index d_low = 256;
  Index d_sem = 1024;
};

inline std::string synthetic_class_id(Index c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "class%03ld", static_cast<long>(c));
  return buf;
}

inline std::string synthetic_stimulus_id(Index c, Index i) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "class%03ld_img%02ld", static_cast<long>(c), static_cast<long>(i));
  return buf;
}

namespace detail {

// d x k matrix with orthonormal columns (modified Gram-Schmidt on Gaussians).
inline Mat<double> random_orthonormal(Index d, Index k, Rng& rng) {
  Mat<double> q(d, k);
  for (Index j = 0; j < k; ++j) {
    Eigen::VectorXd v(d);
    for (Index i = 0; i < d; ++i) v(i) = rng.normal();
    for (Index p = 0; p < j; ++p) v -= q.col(p).dot(v) * q.col(p);
    q.col(j) = v / v.norm();
  }
  return q;
}

inline Eigen::VectorXd gaussian(Index d, double sd, Rng& rng) {
  Eigen::VectorXd v(d);
  for (Index i = 0; i < d; ++i) v(i) = sd * rng.normal();
  return v;
}

inline RowVec<float> unit_float(const Eigen::VectorXd& v) {
  return (v / v.norm()).transpose().cast<float>();
}

}  // namespace detail

/// Desk-scale stand-in for the frozen image/text backbone.
///   text(c)   = class vector (unit, in a class_rank subspace)
///   final(i)  = normalize(class + sigma_inst * u_i),  u_i ~ N(0, I/d)
///   high(i)   = final(i) + sigma_high * u'_i          (raw)
///   low(i)    = P z_i / sqrt(low_rank)                (raw, class-independent)
/// Instance vectors are drawn from streams keyed by the stimulus id hash, so a
/// stimulus' features do not depend on how many others are generated.
inline FeatureBundle synthetic_features(const SyntheticFeatureSpec& spec) {
  require<ArgumentError>(spec.n_classes >= 1 && spec.images_per_class >= 1,
                         "synthetic features need at least one class and one image per class");
  require<ArgumentError>(spec.class_rank >= 1 && spec.class_rank <= spec.d_sem,
                         "class_rank must lie in [1, d_sem]");
  require<ArgumentError>(spec.low_rank >= 1 && spec.low_rank <= spec.d_low,
                         "low_rank must lie in [1, d_low]");
  require<ArgumentError>(spec.sigma_inst >= 0 && spec.sigma_high >= 0, "noise levels must be >= 0");

  Rng basis_rng(derive_seed(spec.seed, hash_string("basis")));
  const Mat<double> class_basis = detail::random_orthonormal(spec.d_sem, spec.class_rank, basis_rng);
  const Mat<double> low_basis = detail::random_orthonormal(spec.d_low, spec.low_rank, basis_rng);

  FeatureBundle fb;
  fb.low = FeatureTable(spec.d_low);
  fb.high = FeatureTable(spec.d_sem);
  fb.final = FeatureTable(spec.d_sem);
  fb.text = FeatureTable(spec.d_sem);
  const double inst_sd = 1.0 / std::sqrt(static_cast<double>(spec.d_sem));

  for (Index c = 0; c < spec.n_classes; ++c) {
    const std::string cid = synthetic_class_id(c);
    Rng crng(derive_seed(spec.seed, hash_string(cid)));
    Eigen::VectorXd z(spec.class_rank);
    for (Index k = 0; k < spec.class_rank; ++k) z(k) = crng.normal();
    const Eigen::VectorXd class_vec = class_basis * (z / z.norm());
    fb.text.add(cid, detail::unit_float(class_vec));

    for (Index i = 0; i < spec.images_per_class; ++i) {
      const std::string sid = synthetic_stimulus_id(c, i);
      Rng irng(derive_seed(spec.seed, hash_string(sid)));
      const Eigen::VectorXd u = detail::gaussian(spec.d_sem, inst_sd, irng);
      const Eigen::VectorXd fin = class_vec + spec.sigma_inst * u;
      const RowVec<float> fin_unit = detail::unit_float(fin);
      fb.final.add(sid, fin_unit);
      const Eigen::VectorXd u2 = detail::gaussian(spec.d_sem, inst_sd, irng);
      fb.high.add(sid, (fin_unit.cast<double>().transpose() + spec.sigma_high * u2).transpose().cast<float>());
      Eigen::VectorXd zl(spec.low_rank);
      for (Index k = 0; k < spec.low_rank; ++k) zl(k) = irng.normal();
      const Eigen::VectorXd low = low_basis * zl / std::sqrt(static_cast<double>(spec.low_rank));
      fb.low.add(sid, low.transpose().cast<float>());
      fb.stimulus_class.emplace(sid, cid);
    }
  }
  for (auto l : {FeatureLevel::low, FeatureLevel::high, FeatureLevel::final, FeatureLevel::text})
    (void)fb.level(l).matrix();
  fb.metadata["provider"] = "synthetic";
  fb.metadata["seed"] = std::to_string(spec.seed);
  fb.metadata["rng"] = kRngAlgorithm;
  return fb;
}

class SyntheticFeatureProvider : public FeatureProvider {
 public:
  explicit SyntheticFeatureProvider(SyntheticFeatureSpec spec)
      : spec_(spec), bundle_(synthetic_features(spec)) {}
  const FeatureBundle& bundle() const override { return bundle_; }
  std::string kind() const override { return "synthetic"; }
  const SyntheticFeatureSpec& spec() const { return spec_; }

 private:
  SyntheticFeatureSpec spec_;
  FeatureBundle bundle_;
};

}  // namespace neurostage
