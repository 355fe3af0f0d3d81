#pragma once

#include "neurostage/data/eeg.hpp"
#include "neurostage/features/synthetic_features.hpp"

#include <cstdio>

namespace neurostage {

struct TimeWindow {
  Index begin = 0;
  Index end = 0;  // exclusive
  Index size() const { return end > begin ? end - begin : 0; }
  bool empty() const { return size() == 0; }
};

struct SyntheticSpec {
  Index n_classes = 20;
  Index images_per_class = 5;
  Index reps = 4;
  Index timesteps = 64;
  // At 1.0 every stage saturates at 100% on the default corpus.
  double noise_sd = 4.0;
  TimeWindow early_window{8, 24};
  TimeWindow late_window{36, 56};
  std::uint64_t seed = 42;
  bool allow_overlap = false;

  // Zero-shot split: the last n_heldout classes form the test set; their first
  // image is shown test_reps times.
  Index n_heldout = 5;
  Index test_reps = 4;
  // Noise stream; plants are shared across subjects of the same seed.
  Index subject = 1;
  double early_gain = 1.0;
  double late_gain = 1.0;
  std::vector<std::string> montage;  // empty -> visual + language channels

  std::vector<std::string> channel_names() const {
    if (!montage.empty()) return montage;
    std::vector<std::string> names = visual_channels();
    for (const auto& n : language_channels())
      if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
    return names;
  }

  void validate() const {
    require<ArgumentError>(n_classes >= 2 && images_per_class >= 1 && reps >= 1 && test_reps >= 1,
                           "synthetic corpus needs >= 2 classes and >= 1 image/repetition");
    require<ArgumentError>(n_heldout >= 1 && n_heldout < n_classes,
                           "n_heldout must lie in [1, n_classes)");
    require<ArgumentError>(noise_sd >= 0, "noise_sd must be >= 0");
    for (const auto* w : {&early_window, &late_window}) {
      if (w->empty()) continue;
      require<ArgumentError>(w->begin >= 0 && w->end <= timesteps,
                             "window [", w->begin, ", ", w->end, ") outside [0, ", timesteps, ")");
    }
    if (!allow_overlap && !early_window.empty() && !late_window.empty())
      require<ArgumentError>(early_window.end <= late_window.begin ||
                                 late_window.end <= early_window.begin,
                             "early and late windows overlap");
  }

  SyntheticFeatureSpec feature_spec() const {
    SyntheticFeatureSpec f;
    f.n_classes = n_classes;
    f.images_per_class = images_per_class;
    f.seed = seed;
    return f;
  }
};

inline std::string synthetic_subject_id(Index s) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "Sub%02ld", static_cast<long>(s));
  return buf;
}

namespace detail {

inline Mat<double> gaussian_matrix(Index r, Index c, Rng& rng) {
  Mat<double> m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace detail

/// Builds a subject corpus with planted staged structure:
///   trial = noise_sd * N(0, 1)
///         + early_gain * A_early low(image)   on early_window (all channels)
///         + late_gain  * A_late  text(class)  on late_window  (all channels)
/// A_early and A_late depend only on the seed.
inline SubjectDataset synthesize_corpus(const SyntheticSpec& spec, const FeatureBundle& fb) {
  spec.validate();
  const auto names = spec.channel_names();
  const Index c = static_cast<Index>(names.size());
  const Index t = spec.timesteps;
  const Index d_low = fb.low.dim();
  const Index d_sem = fb.text.dim();

  Rng enc_rng(derive_seed(spec.seed, hash_string("plant")));
  const Mat<double> a_early =
      detail::gaussian_matrix(c * spec.early_window.size(), d_low, enc_rng);
  const Mat<double> a_late = detail::gaussian_matrix(c * spec.late_window.size(), d_sem, enc_rng);

  auto plant = [&](const std::string& sid, const std::string& cid) {
    RowVec<double> clean = RowVec<double>::Zero(c * t);
    if (!spec.early_window.empty()) {
      const Eigen::VectorXd p = a_early * fb.low.at(sid).cast<double>().transpose();
      const Index w = spec.early_window.size();
      for (Index ch = 0; ch < c; ++ch)
        clean.segment(ch * t + spec.early_window.begin, w) =
            spec.early_gain * p.segment(ch * w, w).transpose();
    }
    if (!spec.late_window.empty()) {
      const Eigen::VectorXd p = a_late * fb.text.at(cid).cast<double>().transpose();
      const Index w = spec.late_window.size();
      for (Index ch = 0; ch < c; ++ch)
        clean.segment(ch * t + spec.late_window.begin, w) =
            spec.late_gain * p.segment(ch * w, w).transpose();
    }
    return clean;
  };

  struct Row {
    std::string sid, cid;
    int rep;
  };
  std::vector<Row> train_rows, test_rows;
  const Index first_heldout = spec.n_classes - spec.n_heldout;
  for (Index k = 0; k < spec.n_classes; ++k) {
    const std::string cid = synthetic_class_id(k);
    if (k < first_heldout) {
      for (Index i = 0; i < spec.images_per_class; ++i)
        for (Index r = 0; r < spec.reps; ++r)
          train_rows.push_back({synthetic_stimulus_id(k, i), cid, static_cast<int>(r)});
    } else {
      for (Index r = 0; r < spec.test_reps; ++r)
        test_rows.push_back({synthetic_stimulus_id(k, 0), cid, static_cast<int>(r)});
    }
  }
  for (const auto* rows : {&train_rows, &test_rows})
    for (const auto& r : *rows)
      if (!fb.low.contains(r.sid) || !fb.text.contains(r.cid))
        throw ArgumentError("feature bundle lacks stimulus " + r.sid + " / class " + r.cid);

  Rng noise_rng(derive_seed(spec.seed, hash_string("noise"), static_cast<std::uint64_t>(spec.subject)));
  auto build = [&](const std::vector<Row>& rows) {
    EegStore s;
    s.channel_names = names;
    s.timesteps = t;
    s.data.resize(static_cast<Index>(rows.size()), c * t);
    std::map<std::string, RowVec<double>> clean_cache;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto it = clean_cache.find(rows[i].sid);
      if (it == clean_cache.end())
        it = clean_cache.emplace(rows[i].sid, plant(rows[i].sid, rows[i].cid)).first;
      for (Index k = 0; k < c * t; ++k) {
        const double noise = spec.noise_sd > 0 ? spec.noise_sd * noise_rng.normal() : 0.0;
        s.data(static_cast<Index>(i), k) = static_cast<float>(it->second(k) + noise);
      }
      s.stimulus_ids.push_back(rows[i].sid);
      s.class_ids.push_back(rows[i].cid);
      s.repetitions.push_back(rows[i].rep);
    }
    return s;
  };

  SubjectDataset ds;
  ds.subject_id = synthetic_subject_id(spec.subject);
  ds.channel_names = names;
  ds.train = build(train_rows);
  ds.test = build(test_rows);
  return ds;
}

}  // namespace neurostage
