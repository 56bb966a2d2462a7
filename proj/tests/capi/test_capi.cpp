#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "confill/confill.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / ("confill_capi_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSmallConfig = R"({"seed": 3, "schedule": {"T": 8}, "train": {"epochs": 1}, "sampler": {"travel_interval": 3}})";

struct Fixture {
  cf_config* cfg = nullptr;
  std::vector<cf_image*> images;
  cf_model* model = nullptr;

  Fixture() {
    REQUIRE(cf_config_from_json(kSmallConfig, &cfg) == CF_OK);
    for (int i = 0; i < 32; ++i) {
      cf_image* img = nullptr;
      REQUIRE(cf_dataset_image(32, 8, 3, nullptr, i, &img) == CF_OK);
      images.push_back(img);
    }
    double loss = 0.0;
    REQUIRE(cf_model_train(cfg, images.data(), images.size(), nullptr, nullptr, &model, &loss) == CF_OK);
    CHECK(loss > 0.0);
  }
  ~Fixture() {
    for (auto* img : images) cf_image_free(img);
    cf_model_free(model);
    cf_config_free(cfg);
  }
};

}  // namespace

TEST_CASE("errors are reported through status codes") {
  cf_config* cfg = nullptr;
  CHECK(cf_config_from_json("{\"nope\": 1}", &cfg) == CF_ERR_CONFIG);
  CHECK(std::string(cf_last_error()).find("nope") != std::string::npos);
  CHECK(cf_config_from_json("{", &cfg) == CF_ERR_CONFIG);
  CHECK(cf_config_new(nullptr) == CF_ERR_ARGUMENT);
  CHECK(cf_image_size(nullptr, nullptr, nullptr) == CF_ERR_ARGUMENT);

  cf_image* img = nullptr;
  CHECK(cf_toy_image("plaid", 0, 16, &img) == CF_ERR_CONFIG);
  CHECK(cf_toy_image("checker", 0, 7, &img) == CF_ERR_CONFIG);
  CHECK(cf_image_load_pgm("/nonexistent/file.pgm", &img) == CF_ERR_IO);

  const fs::path bad = scratch_dir() / "bad.pgm";
  std::ofstream(bad, std::ios::binary) << "P5\n2 2\n255\nab";
  CHECK(cf_image_load_pgm(bad.string().c_str(), &img) == CF_ERR_PARSE);
  cf_model* model = nullptr;
  CHECK(cf_model_load(bad.string().c_str(), &model) == CF_ERR_PARSE);

  const double px[4] = {0.0, 0.1, 0.2, 0.3};
  CHECK(cf_image_create(2, 2, px, &img) == CF_OK);
  cf_mask* mask = nullptr;
  CHECK(cf_mask_make("half_vertical", 0, 8, &mask) == CF_OK);
  cf_string_free(nullptr);
  char* js = nullptr;
  CHECK(cf_features_dump(nullptr, img, mask, "x", &js) == CF_ERR_ARGUMENT);
  cf_mask_free(mask);
  cf_image_free(img);
  CHECK(std::string(cf_version()).size() > 0);
}

TEST_CASE("configuration round trip") {
  cf_config* cfg = nullptr;
  REQUIRE(cf_config_new(&cfg) == CF_OK);
  REQUIRE(cf_config_merge_json(cfg, "{\"sampler\": {\"step_size\": 0.25}}") == CF_OK);
  char* text = nullptr;
  REQUIRE(cf_config_to_json(cfg, &text) == CF_OK);
  cf_config* again = nullptr;
  REQUIRE(cf_config_from_json(text, &again) == CF_OK);
  char* text2 = nullptr;
  REQUIRE(cf_config_to_json(again, &text2) == CF_OK);
  CHECK(std::string(text) == std::string(text2));
  CHECK(std::string(text).find("0.25") != std::string::npos);
  CHECK(cf_config_merge_json(cfg, "{\"sampler\": {\"clip_norm\": -1}}") == CF_ERR_CONFIG);
  cf_string_free(text);
  cf_string_free(text2);
  cf_config_free(again);
  cf_config_free(cfg);
}

TEST_CASE("images and masks through files") {
  const fs::path dir = scratch_dir();
  cf_image* img = nullptr;
  REQUIRE(cf_toy_image("rings", 4, 16, &img) == CF_OK);
  int w = 0, h = 0;
  REQUIRE(cf_image_size(img, &w, &h) == CF_OK);
  CHECK(w == 16);
  CHECK(h == 16);
  const std::string path = (dir / "ring.pgm").string();
  REQUIRE(cf_image_save_pgm(img, path.c_str()) == CF_OK);
  cf_image* back = nullptr;
  REQUIRE(cf_image_load_pgm(path.c_str(), &back) == CF_OK);
  std::vector<double> a(256), b(256);
  REQUIRE(cf_image_copy_data(img, a.data(), a.size()) == CF_OK);
  REQUIRE(cf_image_copy_data(back, b.data(), b.size()) == CF_OK);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 0.5 / 255.0 + 1e-12);
  CHECK(cf_image_copy_data(img, a.data(), 3) == CF_ERR_ARGUMENT);

  cf_mask* mask = nullptr;
  REQUIRE(cf_mask_make("expand", 0, 16, &mask) == CF_OK);
  double frac = 0.0;
  REQUIRE(cf_mask_unknown_fraction(mask, &frac) == CF_OK);
  CHECK(frac == 0.75);
  const std::string mpath = (dir / "mask.pgm").string();
  REQUIRE(cf_mask_save_pgm(mask, mpath.c_str()) == CF_OK);
  cf_mask* mback = nullptr;
  REQUIRE(cf_mask_load_pgm(mpath.c_str(), &mback) == CF_OK);
  REQUIRE(cf_mask_unknown_fraction(mback, &frac) == CF_OK);
  CHECK(frac == 0.75);
  cf_mask_free(mback);
  cf_mask_free(mask);
  cf_image_free(back);
  cf_image_free(img);
}

TEST_CASE("train, calibrate, inpaint and benchmark through the C interface") {
  Fixture f;
  const fs::path dir = scratch_dir();
  int steps = 0;
  REQUIRE(cf_model_steps(f.model, &steps) == CF_OK);
  CHECK(steps == 8);

  const std::string mpath = (dir / "model.ckpt").string();
  REQUIRE(cf_model_save(f.model, mpath.c_str()) == CF_OK);
  cf_model* loaded = nullptr;
  REQUIRE(cf_model_load(mpath.c_str(), &loaded) == CF_OK);
  const std::string mpath2 = (dir / "model2.ckpt").string();
  REQUIRE(cf_model_save(loaded, mpath2.c_str()) == CF_OK);
  CHECK(slurp(mpath) == slurp(mpath2));

  cf_gamma* oracle_gamma = nullptr;
  REQUIRE(cf_gamma_calibrate(nullptr, f.cfg, "confill_cad", nullptr, 0, 8, 1, &oracle_gamma) == CF_OK);
  int gsteps = 0;
  REQUIRE(cf_gamma_steps(oracle_gamma, &gsteps) == CF_OK);
  CHECK(gsteps == 8);
  for (int t = 1; t <= 8; ++t) {
    double g = 0.0;
    REQUIRE(cf_gamma_get(oracle_gamma, t, &g) == CF_OK);
    CHECK(g == 1e-4);
  }
  double dummy = 0.0;
  CHECK(cf_gamma_get(oracle_gamma, 9, &dummy) == CF_ERR_CONTRACT);
  CHECK(cf_gamma_calibrate(f.model, f.cfg, "confill_xx", nullptr, 0, 8, 0, &oracle_gamma) == CF_ERR_CONFIG);

  cf_gamma* gamma = nullptr;
  REQUIRE(cf_gamma_calibrate(f.model, f.cfg, "confill_cad", f.images.data(), 4, 8, 0, &gamma) == CF_OK);
  const std::string gpath = (dir / "gamma.json").string();
  REQUIRE(cf_gamma_save(gamma, gpath.c_str()) == CF_OK);
  cf_gamma* gback = nullptr;
  REQUIRE(cf_gamma_load(gpath.c_str(), &gback) == CF_OK);
  for (int t = 1; t <= 8; ++t) {
    double x = 0.0, y = 0.0;
    cf_gamma_get(gamma, t, &x);
    cf_gamma_get(gback, t, &y);
    CHECK(x == y);
  }

  cf_mask* mask = nullptr;
  REQUIRE(cf_mask_make("half_vertical", 0, 8, &mask) == CF_OK);
  for (const char* method : {"confill_cad", "confill_wd", "confill_l2", "blend"}) {
    cf_result* r1 = nullptr;
    cf_result* r2 = nullptr;
    REQUIRE(cf_inpaint(loaded, f.cfg, f.images[0], mask, method, 11, gback, &r1) == CF_OK);
    REQUIRE(cf_inpaint(loaded, f.cfg, f.images[0], mask, method, 11, gback, &r2) == CF_OK);
    cf_image *o1 = nullptr, *o2 = nullptr;
    REQUIRE(cf_result_output(r1, &o1) == CF_OK);
    REQUIRE(cf_result_output(r2, &o2) == CF_OK);
    std::vector<double> a(64), b(64), ref(64);
    cf_image_copy_data(o1, a.data(), 64);
    cf_image_copy_data(o2, b.data(), 64);
    cf_image_copy_data(f.images[0], ref.data(), 64);
    CHECK(a == b);
    for (int y = 0; y < 8; ++y)
      for (int x = 4; x < 8; ++x) CHECK(a[static_cast<std::size_t>(y * 8 + x)] == ref[static_cast<std::size_t>(y * 8 + x)]);
    int n = 0, jumps = 0;
    REQUIRE(cf_result_steps(r1, &n, &jumps) == CF_OK);
    CHECK(n >= 8);
    const std::string tpath = (dir / "trace.tsv").string();
    REQUIRE(cf_result_save_trace(r1, tpath.c_str()) == CF_OK);
    CHECK(slurp(tpath).rfind("step_index\t", 0) == 0);
    cf_image_free(o1);
    cf_image_free(o2);
    cf_result_free(r1);
    cf_result_free(r2);
  }
  cf_result* bad = nullptr;
  CHECK(cf_inpaint(loaded, f.cfg, f.images[0], mask, "paint", 1, gback, &bad) == CF_ERR_CONFIG);

  const std::string csv = (dir / "bench.csv").string(), summary = (dir / "summary.csv").string();
  REQUIRE(cf_bench(loaded, f.cfg, f.images.data(), 2, "half_vertical,narrow", "confill_cad,blend", 1, 2, 0, gback,
                   csv.c_str(), summary.c_str(), nullptr, nullptr) == CF_OK);
  const std::string first = slurp(csv);
  REQUIRE(cf_bench(loaded, f.cfg, f.images.data(), 2, "half_vertical,narrow", "confill_cad,blend", 1, 1, 0, gback,
                   csv.c_str(), nullptr, nullptr, nullptr) == CF_OK);
  CHECK(slurp(csv) == first);
  CHECK(std::count(first.begin(), first.end(), '\n') == 1 + 2 * 2 * 2);
  REQUIRE(cf_bench(loaded, f.cfg, f.images.data(), 2, "half_vertical", "", 1, 1, 0, gback, csv.c_str(), nullptr,
                   nullptr, nullptr) == CF_OK);
  CHECK(slurp(csv) == "image_id,mask_kind,method,seed,masked_mse,psnr_db,ssim,wall_ms,steps_processed,jumps_taken\r\n");
  CHECK(cf_bench(loaded, f.cfg, f.images.data(), 2, "blob", "blend", 1, 1, 0, gback, csv.c_str(), nullptr, nullptr,
                 nullptr) == CF_ERR_CONFIG);

  char* scales = nullptr;
  REQUIRE(cf_features_dump(f.cfg, f.images[1], nullptr, (dir / "feat").string().c_str(), &scales) == CF_OK);
  CHECK(std::string(scales).find("weight") != std::string::npos);
  CHECK(fs::exists(dir / "feat_weight.pgm"));
  cf_string_free(scales);

  cf_mask_free(mask);
  cf_gamma_free(gback);
  cf_gamma_free(gamma);
  cf_gamma_free(oracle_gamma);
  cf_model_free(loaded);
  fs::remove_all(dir);
}
