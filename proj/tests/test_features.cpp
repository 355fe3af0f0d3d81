#include "helpers.hpp"
#include "oracle.hpp"

#include <fstream>

using namespace neurostage;
using testutil::TempDir;

namespace {

FeatureBundle tiny_bundle(std::uint64_t seed = 42) {
  SyntheticFeatureSpec s;
  s.n_classes = 4;
  s.images_per_class = 3;
  s.d_low = 6;
  s.d_sem = 10;
  s.class_rank = 3;
  s.low_rank = 3;
  s.seed = seed;
  return synthetic_features(s);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

void dump(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary | std::ios::trunc) << s;
}

}  // namespace

// ---- synthetic features ------------------------------------------------------------

TEST(SyntheticFeatures, DeterministicPerSeed) {
  EXPECT_EQ(tiny_bundle(5), tiny_bundle(5));
  EXPECT_NE(tiny_bundle(5).final.matrix(), tiny_bundle(6).final.matrix());
}

TEST(SyntheticFeatures, ShapesIdsAndUnitRows) {
  const FeatureBundle fb = tiny_bundle();
  EXPECT_EQ(fb.low.dim(), 6);
  EXPECT_EQ(fb.high.dim(), 10);
  EXPECT_EQ(fb.final.size(), 12u);
  EXPECT_EQ(fb.text.size(), 4u);
  EXPECT_EQ(fb.class_of("class002_img01"), "class002");
  EXPECT_EQ(fb.stimuli_of("class001").size(), 3u);
  for (const auto* t : {&fb.final, &fb.text})
    for (Index r = 0; r < t->matrix().rows(); ++r)
      EXPECT_NEAR(t->matrix().row(r).cast<double>().norm(), 1.0, 1e-6);
}

TEST(SyntheticFeatures, ZeroInstanceNoiseGivesClassVector) {
  SyntheticFeatureSpec s;
  s.n_classes = 3;
  s.images_per_class = 2;
  s.sigma_inst = 0.0;
  s.d_low = 8;
  s.d_sem = 12;
  s.class_rank = 3;
  s.low_rank = 2;
  const FeatureBundle fb = synthetic_features(s);
  for (const auto& sid : fb.final.ids())
    EXPECT_LE((fb.final.at(sid) - fb.text.at(fb.class_of(sid))).norm(), 1e-6f) << sid;
}

TEST(SyntheticFeatures, WithinClassCloserThanBetween) {
  for (std::uint64_t seed : {1, 2, 3}) {
    SyntheticFeatureSpec s;
    s.seed = seed;
    const FeatureBundle fb = synthetic_features(s);
    const Mat<double> f = fb.final.matrix().cast<double>();
    double within = 0, between = 0;
    long nw = 0, nb = 0;
    for (Index i = 0; i < f.rows(); ++i)
      for (Index j = i + 1; j < f.rows(); ++j) {
        const double c = f.row(i).dot(f.row(j));
        if (fb.class_of(fb.final.ids()[i]) == fb.class_of(fb.final.ids()[j])) {
          within += c;
          ++nw;
        } else {
          between += c;
          ++nb;
        }
      }
    EXPECT_GT(within / nw - between / nb, 0.2) << "seed " << seed;
  }
}

TEST(SyntheticFeatures, StimulusVectorsIndependentOfCorpusSize) {
  SyntheticFeatureSpec a, b;
  a.n_classes = 3;
  b.n_classes = 5;
  const FeatureBundle fa = synthetic_features(a), fbig = synthetic_features(b);
  EXPECT_EQ(fa.final.at("class001_img02"), fbig.final.at("class001_img02"));
  EXPECT_EQ(fa.low.at("class002_img00"), fbig.low.at("class002_img00"));
}

TEST(SyntheticFeatures, RejectsBadSpec) {
  SyntheticFeatureSpec s;
  s.class_rank = 0;
  EXPECT_THROW(synthetic_features(s), ArgumentError);
  s = SyntheticFeatureSpec{};
  s.sigma_inst = -1;
  EXPECT_THROW(synthetic_features(s), ArgumentError);
}

// ---- binary container ----------------------------------------------------------------

TEST(Container, LayoutAndRoundTrip) {
  Mat<float> m(3, 2);
  m << 1.5f, -0.0f, std::numeric_limits<float>::denorm_min(), 3e38f, -7.25f, 0.1f;
  const auto buf = io::encode(io::LevelCode::high, m);
  ASSERT_EQ(buf.size(), io::kHeaderBytes + 4 * 6 + 4);
  EXPECT_EQ(std::string(buf.begin(), buf.begin() + 4), "NSFC");
  EXPECT_EQ(buf[4], 1);
  EXPECT_EQ(buf[10], 3);
  EXPECT_EQ(buf[18], 2);
  const io::Container c = io::decode(buf, "mem");
  EXPECT_EQ(c.level, io::LevelCode::high);
  ASSERT_EQ(c.data.rows(), 3);
  for (Index i = 0; i < m.size(); ++i) {
    std::uint32_t a, b;
    std::memcpy(&a, &m.data()[i], 4);
    std::memcpy(&b, &c.data.data()[i], 4);
    EXPECT_EQ(a, b);
  }
}

TEST(Container, DistinguishesFailures) {
  const Mat<float> m = testutil::random_mat<float>(4, 3, 1);
  const auto good = io::encode(io::LevelCode::low, m);

  auto truncated = good;
  truncated.resize(truncated.size() - 7);
  EXPECT_THROW(io::decode(truncated, "t"), ChecksumError);

  auto flipped = good;
  flipped[io::kHeaderBytes + 5] ^= 0x10;
  EXPECT_THROW(io::decode(flipped, "f"), ChecksumError);

  auto wide = good;
  wide[18] = 6;  // header says dim 6; payload holds 12 floats = 4 rows x 3
  EXPECT_THROW(io::decode(wide, "w"), ShapeMismatchError);

  auto version = good;
  version[4] = 9;
  EXPECT_THROW(io::decode(version, "v"), VersionMismatchError);

  EXPECT_THROW(io::decode(std::vector<unsigned char>(10, 0), "s"), ChecksumError);
  EXPECT_THROW(io::decode(good, "l", io::LevelCode::text), LoadError);
}

// ---- feature cache -------------------------------------------------------------------

TEST(FeatureCache, RoundTripIsBitExact) {
  TempDir d;
  const FeatureBundle fb = tiny_bundle();
  write_cache(fb, d.path());
  const FeatureBundle back = load_cached_features(d.path());
  EXPECT_EQ(back, fb);
  EXPECT_EQ(back.metadata.at("provider"), "synthetic");
  // Loading twice does not drift (normalization is idempotent).
  write_cache(back, d / "again");
  EXPECT_EQ(load_cached_features(d / "again"), fb);
}

TEST(FeatureCache, RenormalizesOffUnitRows) {
  TempDir d;
  FeatureBundle fb = tiny_bundle();
  Mat<float> f = fb.final.matrix();
  f.row(0) *= 3.0f;
  fb.final.set_matrix(fb.final.ids(), f);
  write_cache(fb, d.path());
  EXPECT_NEAR(load_cached_features(d.path()).final.matrix().row(0).cast<double>().norm(), 1.0, 1e-6);
}

TEST(FeatureCache, MissingLevel) {
  TempDir d;
  write_cache(tiny_bundle(), d.path());
  std::filesystem::remove(d / "high.nsfc");
  try {
    load_cached_features(d.path());
    FAIL();
  } catch (const MissingLevelError& e) {
    EXPECT_NE(std::string(e.what()).find("'high'"), std::string::npos);
  }
}

TEST(FeatureCache, TruncatedFileIsChecksumError) {
  TempDir d;
  write_cache(tiny_bundle(), d.path());
  const std::string s = slurp(d / "low.nsfc");
  dump(d / "low.nsfc", s.substr(0, s.size() - 9));
  EXPECT_THROW(load_cached_features(d.path()), ChecksumError);
}

TEST(FeatureCache, WrongWidthIsShapeMismatch) {
  TempDir d;
  write_cache(tiny_bundle(), d.path());
  std::string s = slurp(d / "final.nsfc");
  s[18] = 5;  // 12 rows x 10 floats re-read as width 5
  dump(d / "final.nsfc", s);
  EXPECT_THROW(load_cached_features(d.path()), ShapeMismatchError);
}

TEST(FeatureCache, IndexCountMismatchIsShapeMismatch) {
  TempDir d;
  write_cache(tiny_bundle(), d.path());
  dump(d / "text.index.json", R"({"class000": 0})");
  EXPECT_THROW(load_cached_features(d.path()), ShapeMismatchError);
}

TEST(FeatureCache, NonFiniteValuesRejected) {
  TempDir d;
  FeatureBundle fb = tiny_bundle();
  Mat<float> l = fb.low.matrix();
  l(2, 1) = std::numeric_limits<float>::quiet_NaN();
  fb.low.set_matrix(fb.low.ids(), l);
  write_cache(fb, d.path());
  EXPECT_THROW(load_cached_features(d.path()), NonFiniteDataError);
}

TEST(FeatureTable, UnknownIdNamed) {
  const FeatureBundle fb = tiny_bundle();
  try {
    fb.final.at("nope");
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("nope"), std::string::npos);
  }
}

// ---- backbone -------------------------------------------------------------------------

TEST(Backbone, UnavailableCommandIsEnvironmentError) {
  TempDir d;
  std::filesystem::create_directories(d / "images");
  dump(d / "labels.txt", "dog\n");
  BackboneOptions opt;
  opt.command = "false";
  try {
    extract_backbone_features(d / "images", d / "labels.txt", d / "cache", opt);
    FAIL();
  } catch (const EnvironmentError& e) {
    EXPECT_NE(std::string(e.what()).find("synthetic"), std::string::npos);
  }
}

TEST(Backbone, ExternalCommandWritesCache) {
  TempDir d;
  std::filesystem::create_directories(d / "images");
  dump(d / "labels.txt", "dog\n");
  write_cache(tiny_bundle(), d / "prebuilt");
  // A stand-in extractor: passes --check, then copies a prepared cache to --out.
  const auto script = d / "fake.sh";
  dump(script, "#!/bin/sh\n[ \"$1\" = --check ] && exit 0\nwhile [ $# -gt 0 ]; do\n"
               "  [ \"$1\" = --out ] && cp -r '" + (d / "prebuilt").string() + "' \"$2\"\n  shift\ndone\n");
  std::filesystem::permissions(script, std::filesystem::perms::owner_all);
  BackboneOptions opt;
  opt.command = script.string();
  EXPECT_EQ(extract_backbone_features(d / "images", d / "labels.txt", d / "cache", opt), tiny_bundle());
}
