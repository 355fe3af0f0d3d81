#pragma once

#include "neurostage/neurostage.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <string>

namespace testutil {

using namespace neurostage;

// C = 3 visual + 2 latent, T = 8, d_low 8, d_sem 16.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.n_visual_channels = 3;
  c.n_latent_channels = 2;
  c.n_timesteps = 8;
  c.d_low = 8;
  c.d_sem = 16;
  c.temporal_hidden = 4;
  return c;
}

template <class S>
Mat<S> random_mat(Index r, Index c, std::uint64_t seed, double sd = 1.0) {
  Rng rng(seed);
  Mat<S> m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = static_cast<S>(sd * rng.normal());
  return m;
}

template <class S>
void randomize(ParamSet<S>& ps, std::uint64_t seed, double sd = 0.5) {
  Rng rng(seed);
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (Index k = 0; k < ps[i].size(); ++k) ps[i].data()[k] = static_cast<S>(sd * rng.normal());
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = info ? std::string(info->test_suite_name()) + "_" + info->name() : "neurostage";
    for (char& ch : name)
      if (ch == '/') ch = '_';
    path_ = std::filesystem::temp_directory_path() / ("neurostage_test_" + name);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

// Small synthetic world for pipeline tests: 6 classes x 2 images, 2 held out.
inline SyntheticSpec small_spec(std::uint64_t seed = 42) {
  SyntheticSpec s;
  s.n_classes = 6;
  s.images_per_class = 2;
  s.reps = 2;
  s.timesteps = 8;
  s.early_window = {1, 3};
  s.late_window = {5, 7};
  s.n_heldout = 2;
  s.test_reps = 2;
  s.seed = seed;
  return s;
}

inline FeatureBundle small_features(const SyntheticSpec& s) {
  SyntheticFeatureSpec f = s.feature_spec();
  f.d_low = 8;
  f.d_sem = 16;
  f.class_rank = 4;
  f.low_rank = 4;
  return synthetic_features(f);
}

// Model over the synthetic montage with tiny widths and 17 visual channels.
inline ModelConfig small_model(Index timesteps = 8) {
  ModelConfig c;
  c.n_timesteps = timesteps;
  c.d_low = 8;
  c.d_sem = 16;
  c.temporal_hidden = 4;
  return c;
}

}  // namespace testutil
