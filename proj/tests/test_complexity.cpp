#include "helpers.hpp"

using namespace neurostage;

TEST(Complexity, AffineLayerCounts) {
  ParamSet<float> ps;
  const Linear l = Linear::make(ps, "fc", 10, 20);
  EXPECT_EQ(l.param_count(), 220u);
  EXPECT_EQ(ps.count(), 220u);
  EXPECT_EQ(l.macs(), 200u);
}

TEST(Complexity, GraphAttentionCounts) {
  ParamSet<float> ps;
  const auto g = GraphAttention::make(ps, "g", 8, 0.2);
  EXPECT_EQ(g.param_count(), 8u * 8 + 3 * 8);
  // 3 nodes x 8 features: projection 3*64, scores 2*3*8, aggregation 3*2*8.
  EXPECT_EQ(g.macs(3), 288u);
}

// Hand ledger for C = 3 visual + 2 latent, T = 8, d_low 8, d_sem 16, hidden 4.
TEST(Complexity, TinyConfigLedger) {
  ParamSet<float> ps;
  StagedModel m(testutil::tiny_config(), ps);
  const ComplexityReport r = count_complexity(m, ps);

  struct Row {
    const char* name;
    std::size_t params, macs, elementwise;
  };
  const Row want[] = {
      {"phase1.weighter", (8 * 4 + 4) + (4 * 8 + 8), 32 + 32, 4 + 3 * 8},
      {"phase1.gat", (64 + 24) + (9 + 9), 288 + (8 * 9 + 2 * 8 * 3 + 8 * 7 * 3),
       2 * 24 + (6 + 18 + 24) + (56 + 168 + 24) + 2 * 24},
      {"phase1.encoder", 24 * 8 + 8 + 2 * 8, 24 * 8, 8 + 6 * 8},
      {"slc", 2 * 3 + 2, 2 * 3 * 8, 0},
      {"phase2.weighter", 76, 64, 28},
      {"phase2.gat", (64 + 24) + (25 + 15), (5 * 64 + 2 * 5 * 8 + 5 * 4 * 8) + (8 * 25 + 2 * 8 * 5 + 8 * 7 * 5),
       2 * 40 + (20 + 60 + 40) + (56 + 168 + 40) + 2 * 40},
      {"phase2.coarse", 2 * (16 * 16 + 16) + 32, 16 * 16 + 16 * 16, 16 + 16 + 16 + 96},
      {"phase2.fine", 40 * 16 + 16 + 32, 40 * 16, 16 + 96},
      {"phase3.fusion", 24 * 16 + 16, 24 * 16, 16},
      {"projector.low", 2 * (8 * 8 + 8), 2 * 64, 8 + 24},
      {"projector.high", 2 * (16 * 16 + 16), 2 * 256, 16 + 48},
      {"logit_scale", 4, 0, 0},
  };
  ASSERT_EQ(r.modules.size(), std::size(want));
  std::size_t eeg_macs = 0, eeg_flops = 0, total = 0;
  for (const Row& w : want) {
    const ModuleCost& c = r.at(w.name);
    EXPECT_EQ(c.params, w.params) << w.name;
    EXPECT_EQ(c.macs, w.macs) << w.name;
    EXPECT_EQ(c.elementwise, w.elementwise) << w.name;
    EXPECT_EQ(c.flops(), 2 * w.macs + w.elementwise) << w.name;
    total += w.params;
    if (std::string(w.name).rfind("projector", 0) != 0) {
      eeg_macs += w.macs;
      eeg_flops += 2 * w.macs + w.elementwise;
    }
  }
  EXPECT_EQ(total, 2966u);
  EXPECT_EQ(r.total_params(), ps.count());
  EXPECT_EQ(r.eeg_params(), 2966u - 144 - 544);
  EXPECT_EQ(r.eeg_macs(), eeg_macs);
  EXPECT_EQ(r.eeg_flops(), eeg_flops);
  EXPECT_THROW(r.at("nope"), ArgumentError);
}

TEST(Complexity, VariantsDropModules) {
  for (const auto& name : variant_names()) {
    ParamSet<float> ps;
    StagedModel m(build_variant(name, testutil::tiny_config()).config, ps);
    const ComplexityReport r = count_complexity(m, ps);
    EXPECT_EQ(r.total_params(), ps.count()) << name;
  }
  ParamSet<float> ps;
  StagedModel m(build_variant("xP-xPhaseII", testutil::tiny_config()).config, ps);
  const ComplexityReport r = count_complexity(m, ps);
  EXPECT_THROW(r.at("phase2.gat"), ArgumentError);
  EXPECT_EQ(r.at("phase3.fusion").params, 8u * 16 + 16);
}

TEST(Complexity, DefaultConfigTable) {
  ParamSet<float> ps;
  StagedModel m(ModelConfig{}, ps);
  const ComplexityReport r = count_complexity(m, ps);
  const std::string table = complexity_table(r);
  EXPECT_NE(table.find("phase2.gat"), std::string::npos);
  EXPECT_NE(table.find("(image side)"), std::string::npos);
  EXPECT_GT(r.eeg_params(), 0u);
  EXPECT_EQ(r.eeg_flops(), 2 * r.eeg_macs() + [&] {
    std::size_t e = 0;
    for (const auto& mc : r.modules)
      if (!mc.image_side) e += mc.elementwise;
    return e;
  }());
}
