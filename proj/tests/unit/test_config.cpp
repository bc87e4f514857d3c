#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "tconst/config.hpp"
#include "tconst/errors.hpp"

using namespace tconst;

TEST(VariantName, TConstHalfSplit) {
  const VariantName v = parse_variant_name("TConstFormer 2K-512-0.5");
  EXPECT_EQ(v.family, ModelFamily::TConstFormer);
  EXPECT_EQ(v.train_len, 2048u);
  EXPECT_EQ(v.w_total, 512u);
  EXPECT_EQ(v.history_window, 256u);
  EXPECT_EQ(v.gen_window, 256u);
}

TEST(VariantName, BaseHasNoWindows) {
  const VariantName v = parse_variant_name("Base 1K");
  EXPECT_EQ(v.family, ModelFamily::Base);
  EXPECT_EQ(v.train_len, 1024u);
  EXPECT_FALSE(v.history_window.has_value());
}

TEST(VariantName, GoldenRatioRoundsToNearest) {
  // 0.382 * 512 = 195.58
  const VariantName v = parse_variant_name("TConstFormer 512-512-0.382");
  EXPECT_EQ(v.history_window, 196u);
  EXPECT_EQ(v.gen_window, 316u);
}

TEST(VariantName, MalformedNamesAreParseErrors) {
  for (const char* bad : {"", "TConstFormer", "TConstFormer 2K-512", "TConstFormer 2K-512-1.5",
                          "TConstFormer 2K-512-0", "TConstFormer 2K-x-0.5", "Other 1K", "Base k",
                          "TConstFormer 2K-512-0.5x"}) {
    EXPECT_THROW(parse_variant_name(bad), ParseError) << bad;
  }
}

TEST(Presets, ToyValues) {
  const ModelConfig c = preset("toy");
  EXPECT_EQ(c.d_model, 8u);
  EXPECT_EQ(c.ctx_layers, 2u);
  EXPECT_EQ(c.history_window, 4u);
  EXPECT_EQ(c.gen_window, 4u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Presets, FortyOneMShapes) {
  const ModelConfig base = preset("paper-41m-base");
  EXPECT_EQ(base.d_model, 432u);
  EXPECT_EQ(base.n_heads, 12u);
  EXPECT_EQ(base.n_layers_baseline, 8u);
  const ModelConfig tc = preset("paper-41m-tconst-2k-512-0.5");
  EXPECT_EQ(tc.history_window, 256u);
  EXPECT_EQ(tc.gen_window, 256u);
  EXPECT_EQ(tc.equivalent_depth(), 8u);
  EXPECT_EQ(preset_names().size(), 3u);
}

TEST(Presets, UnknownNameThrows) { EXPECT_THROW(preset("huge"), ConfigError); }

TEST(ConfigText, OverridesOnTopOfPreset) {
  const ModelConfig c = parse_config_text(
      "# comment\n"
      "preset = toy\n"
      "d_model = 16   # trailing\n"
      "n_heads = 4\n"
      "final_restore = false\n"
      "variant = TConstFormer 1K-12-0.25\n");
  EXPECT_EQ(c.d_model, 16u);
  EXPECT_EQ(c.n_heads, 4u);
  EXPECT_FALSE(c.final_restore);
  EXPECT_EQ(c.history_window, 3u);
  EXPECT_EQ(c.gen_window, 9u);
}

TEST(ConfigText, Rejections) {
  EXPECT_THROW(parse_config_text("d_model 8\n"), ConfigError);
  EXPECT_THROW(parse_config_text("depth = 3\n"), ConfigError);
  EXPECT_THROW(parse_config_text("d_model = -4\n"), ConfigError);
  EXPECT_THROW(parse_config_text("tie_embeddings = maybe\n"), ConfigError);
  EXPECT_THROW(parse_config_text("d_model = 7\nn_heads = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("n_heads = 3\n"), ConfigError);
  EXPECT_THROW(parse_config_text("gen_window = 0\n"), ConfigError);
  EXPECT_THROW(parse_config_text("variant = Base 1K\n"), ConfigError);
}

TEST(ConfigFile, LoadsAndReportsMissing) {
  const std::string path = testing::TempDir() + "tconst_cfg.txt";
  {
    std::ofstream out(path);
    out << "preset = toy\nn_blocks = 3\n";
  }
  EXPECT_EQ(load_config_file(path).n_blocks, 3u);
  std::remove(path.c_str());
  EXPECT_THROW(load_config_file(path), ConfigError);
}

TEST(ModelConfig, DerivedCounts) {
  ModelConfig c = toy_config();
  c.n_blocks = 2;
  c.final_restore = false;
  EXPECT_EQ(c.gen_layers(), 4u);
  EXPECT_EQ(c.cross_layers(), 3u);
  EXPECT_EQ(c.equivalent_depth(), 8u);
  EXPECT_TRUE(c.block_has_restore(0));
  EXPECT_FALSE(c.block_has_restore(1));
}
