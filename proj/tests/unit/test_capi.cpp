// Exercises the shared library through its C header only.
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "navfeat/navfeat.h"

namespace fs = std::filesystem;

namespace {

std::string Scratch(const std::string& name) {
  const fs::path p = fs::path(NAVFEAT_BINARY_DIR) / "capi_scratch" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

nlohmann::json ConfigJson(const nf_config* cfg) {
  char* text = nullptr;
  EXPECT_EQ(nf_config_to_json(cfg, &text), NF_OK);
  auto j = nlohmann::json::parse(text);
  nf_string_free(text);
  return j;
}

}  // namespace

TEST(CApi, VersionAndErrorState) {
  EXPECT_STREQ(nf_version(), "1.0.0");
  EXPECT_EQ(nf_config_create(nullptr), NF_ERR_INVALID_ARGUMENT);
  EXPECT_NE(std::string(nf_last_error()).find("null"), std::string::npos);
  nf_config* cfg = nullptr;
  ASSERT_EQ(nf_config_create(&cfg), NF_OK);
  EXPECT_STREQ(nf_last_error(), "");
  nf_config_destroy(cfg);
  nf_config_destroy(nullptr);  // no-op
}

TEST(CApi, ConfigSetHashAndJson) {
  nf_config* cfg = nullptr;
  ASSERT_EQ(nf_config_create(&cfg), NF_OK);
  std::uint64_t h0 = 0, h1 = 0, h2 = 0;
  ASSERT_EQ(nf_config_hash(cfg, &h0), NF_OK);
  ASSERT_EQ(nf_config_set(cfg, "extract.feat_ratio", "0.002"), NF_OK);
  ASSERT_EQ(nf_config_hash(cfg, &h1), NF_OK);
  EXPECT_NE(h0, h1);
  EXPECT_DOUBLE_EQ(ConfigJson(cfg)["extract"]["feat_ratio"].get<double>(), 0.002);

  // A rejected edit leaves the handle untouched.
  EXPECT_NE(nf_config_set(cfg, "extract.feat_ratio", "not json"), NF_OK);
  EXPECT_NE(nf_config_set(cfg, "no_such_key", "1"), NF_OK);
  EXPECT_NE(std::string(nf_last_error()), "");
  EXPECT_NE(nf_config_merge_json(cfg, "{\"extract\": {\"feat_ratio\": \"x\"}}"), NF_OK);
  ASSERT_EQ(nf_config_hash(cfg, &h2), NF_OK);
  EXPECT_EQ(h1, h2);
  EXPECT_EQ(nf_config_validate(cfg), NF_OK);

  // Range checks are deferred to validate, so related keys can be edited one at a time.
  ASSERT_EQ(nf_config_merge_json(cfg, "{\"extract\": {\"feat_ratio\": -1}}"), NF_OK);
  EXPECT_EQ(nf_config_validate(cfg), NF_ERR_INVALID_ARGUMENT);
  ASSERT_EQ(nf_config_set(cfg, "extract.feat_ratio", "0.002"), NF_OK);
  EXPECT_EQ(nf_config_validate(cfg), NF_OK);

  // Serialised form loads back to the same hash.
  const std::string dir = Scratch("config");
  const std::string path = dir + "/c.json";
  std::ofstream(path) << ConfigJson(cfg).dump();
  nf_config* back = nullptr;
  ASSERT_EQ(nf_config_load(path.c_str(), &back), NF_OK);
  std::uint64_t h3 = 0;
  ASSERT_EQ(nf_config_hash(back, &h3), NF_OK);
  EXPECT_EQ(h1, h3);
  nf_config_destroy(back);
  EXPECT_EQ(nf_config_load((dir + "/missing.json").c_str(), &back), NF_ERR_IO);
  nf_config_destroy(cfg);
}

TEST(CApi, FormulaEntryPoints) {
  std::uint8_t v = 1;
  ASSERT_EQ(nf_rescale_value(10, 10, 110, 1.8, 1.2, &v), NF_OK);
  EXPECT_EQ(v, 0);
  ASSERT_EQ(nf_rescale_value(132, 10, 110, 1.8, 1.2, &v), NF_OK);
  EXPECT_EQ(v, 255);
  EXPECT_EQ(nf_rescale_value(50, 110, 10, 1.8, 1.2, &v), NF_ERR_INVALID_ARGUMENT);

  // Single positive at index 2 ranks third: AP = 1/3.
  const double sims[] = {0.5, 0.9, 0.1};
  double ap = 0, q = 0;
  ASSERT_EQ(nf_ap_exact(sims, 3, 2, &ap), NF_OK);
  EXPECT_DOUBLE_EQ(ap, 1.0 / 3.0);
  // Between bin centres the positive's mass splits and the estimate drops below 1/3.
  ASSERT_EQ(nf_ap_quantized(sims, 3, 2, 256, &q), NF_OK);
  EXPECT_LT(q, ap);
  EXPECT_GT(q, 0.25);
  // On bin centres (bins = 3: 1, 0, -1) the two agree: rank 2 of 3.
  const double centred[] = {0.0, 1.0, -1.0};
  ASSERT_EQ(nf_ap_exact(centred, 3, 0, &ap), NF_OK);
  ASSERT_EQ(nf_ap_quantized(centred, 3, 0, 3, &q), NF_OK);
  EXPECT_DOUBLE_EQ(ap, 0.5);
  EXPECT_DOUBLE_EQ(q, 0.5);
  EXPECT_EQ(nf_ap_exact(nullptr, 3, 1, &ap), NF_ERR_INVALID_ARGUMENT);

  double p = 0;
  ASSERT_EQ(nf_foreground_percentile(100, 100, 0.0, &p), NF_OK);
  EXPECT_DOUBLE_EQ(p, 1.0);
}

TEST(CApi, FeatureMapRoundTrip) {
  nf_feature_map* m = nullptr;
  EXPECT_EQ(nf_feature_map_create(4, 3, 2, 3, 1.0f, &m), NF_ERR_INVALID_ARGUMENT);
  ASSERT_EQ(nf_feature_map_create(4, 3, 2, 2, 0.5f, &m), NF_OK);
  float* d = nf_feature_map_descriptors(m);
  for (int i = 0; i < 4 * 3 * 2; ++i) d[i] = static_cast<float>(i) * 0.25f;
  nf_feature_map_detection(m, 0)[5] = 0.75f;
  nf_feature_map_detection(m, 1)[7] = 0.5f;
  EXPECT_EQ(nf_feature_map_detection(m, 2), nullptr);
  const std::string path = Scratch("dfm") + "/m.dfm";
  ASSERT_EQ(nf_feature_map_write(m, path.c_str()), NF_OK);
  nf_feature_map_destroy(m);

  nf_feature_map* r = nullptr;
  ASSERT_EQ(nf_feature_map_read(path.c_str(), &r), NF_OK);
  int w = 0, h = 0, dim = 0, nd = 0;
  float scale = 0;
  ASSERT_EQ(nf_feature_map_info(r, &w, &h, &dim, &nd, &scale), NF_OK);
  EXPECT_EQ(w, 4);
  EXPECT_EQ(h, 3);
  EXPECT_EQ(dim, 2);
  EXPECT_EQ(nd, 2);
  EXPECT_EQ(scale, 0.5f);
  EXPECT_EQ(nf_feature_map_descriptors(r)[23], 5.75f);
  EXPECT_EQ(nf_feature_map_detection(r, 0)[5], 0.75f);
  EXPECT_EQ(nf_feature_map_detection(r, 1)[7], 0.5f);
  nf_feature_map_destroy(r);

  std::ofstream(path, std::ios::binary) << "JUNK";
  EXPECT_EQ(nf_feature_map_read(path.c_str(), &r), NF_ERR_FORMAT);
  EXPECT_EQ(nf_feature_map_descriptors(nullptr), nullptr);
}

TEST(CApi, CorrAndGeoRoundTrip) {
  const std::string dir = Scratch("cor_geo");
  nf_corr* c = nullptr;
  ASSERT_EQ(nf_corr_create(3, 2, &c), NF_OK);
  EXPECT_TRUE(std::isnan(nf_corr_x(c)[0]));
  nf_corr_x(c)[4] = 1.5f;
  nf_corr_y(c)[4] = -2.0f;
  ASSERT_EQ(nf_corr_write(c, (dir + "/a.cor").c_str()), NF_OK);
  nf_corr_destroy(c);
  ASSERT_EQ(nf_corr_read((dir + "/a.cor").c_str(), &c), NF_OK);
  int w = 0, h = 0;
  ASSERT_EQ(nf_corr_info(c, &w, &h), NF_OK);
  EXPECT_EQ(w * 10 + h, 32);
  EXPECT_EQ(nf_corr_x(c)[4], 1.5f);
  EXPECT_EQ(nf_corr_y(c)[4], -2.0f);
  EXPECT_TRUE(std::isnan(nf_corr_y(c)[5]));
  nf_corr_destroy(c);

  nf_geo* g = nullptr;
  ASSERT_EQ(nf_geo_create(2, 2, &g), NF_OK);
  float* p = nf_geo_data(g);
  for (int i = 0; i < 12; ++i) p[i] = static_cast<float>(i);
  ASSERT_EQ(nf_geo_write(g, (dir + "/a.geo").c_str()), NF_OK);
  nf_geo_destroy(g);
  ASSERT_EQ(nf_geo_read((dir + "/a.geo").c_str(), &g), NF_OK);
  EXPECT_EQ(nf_geo_data(g)[11], 11.0f);
  nf_geo_destroy(g);
  EXPECT_EQ(nf_geo_read((dir + "/none.geo").c_str(), &g), NF_ERR_IO);
  EXPECT_EQ(nf_geo_info(nullptr, &w, &h), NF_ERR_INVALID_ARGUMENT);
}

TEST(CApi, SearchSpaces) {
  nf_space* s = nullptr;
  ASSERT_EQ(nf_space_preset("disk", &s), NF_OK);
  std::size_t n = 0;
  ASSERT_EQ(nf_space_size(s, &n), NF_OK);
  EXPECT_EQ(n, 9u);
  char* text = nullptr;
  ASSERT_EQ(nf_space_to_json(s, &text), NF_OK);
  nf_space* back = nullptr;
  ASSERT_EQ(nf_space_from_json(text, &back), NF_OK);
  char* text2 = nullptr;
  ASSERT_EQ(nf_space_to_json(back, &text2), NF_OK);
  EXPECT_STREQ(text, text2);
  nf_string_free(text);
  nf_string_free(text2);
  nf_space_destroy(back);
  nf_space_destroy(s);
  EXPECT_EQ(nf_space_preset("nope", &s), NF_ERR_INVALID_ARGUMENT);
  EXPECT_NE(nf_space_from_json("[", &s), NF_OK);
}

TEST(CApi, CommandErrors) {
  nf_config* cfg = nullptr;
  ASSERT_EQ(nf_config_create(&cfg), NF_OK);
  const std::string empty = Scratch("empty_in");
  nf_preprocess_summary ps{};
  EXPECT_EQ(nf_cmd_preprocess(cfg, empty.c_str(), Scratch("empty_out").c_str(), &ps),
            NF_ERR_EMPTY_INPUT);
  EXPECT_NE(std::string(nf_last_error()).find("no inputs"), std::string::npos);

  ASSERT_EQ(nf_config_set(cfg, "evaluate.manifest", "\"/nonexistent/manifest.csv\""), NF_OK);
  nf_evaluate_summary es{};
  EXPECT_EQ(nf_cmd_evaluate(cfg, Scratch("eval").c_str(), &es), NF_ERR_INVALID_ARGUMENT);
  EXPECT_NE(std::string(nf_last_error()).find("manifest"), std::string::npos);
  EXPECT_EQ(nf_cmd_report(cfg, nullptr, 1, Scratch("rep").c_str(), nullptr),
            NF_ERR_INVALID_ARGUMENT);
  nf_config_destroy(cfg);
}
