#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + CONFILL_CLI + std::string(" ") + args + " 2>/dev/null";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// The effective configuration is the first JSON document on stdout.
nlohmann::json echoed_config(const std::string& out) {
  const auto end = out.find("\n}\n");
  REQUIRE(end != std::string::npos);
  return nlohmann::json::parse(out.substr(0, end + 2));
}

class Workspace {
 public:
  Workspace() : dir_(fs::temp_directory_path() / ("confill_cli_" + std::to_string(::getpid()))) {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    std::ofstream(dir_ / "small.json") << R"({"schedule": {"T": 8}, "train": {"epochs": 1}, "sampler": {"travel_interval": 3}})";
  }
  ~Workspace() { fs::remove_all(dir_); }
  std::string operator()(const std::string& name) const { return (dir_ / name).string(); }

 private:
  fs::path dir_;
};

const Workspace& ws() {
  static Workspace w;
  return w;
}

/// A 32-image 8x8 dataset plus a one-epoch model, built once.
const std::string& small_model() {
  static const std::string path = [] {
    REQUIRE(run("gen-data --out " + ws()("data") + " --count 32 --size 8 --seed 2").code == 0);
    REQUIRE(run("train --data " + ws()("data") + " --out " + ws()("model.ckpt") + " --config " + ws()("small.json") +
                " --seed 2")
                .code == 0);
    return ws()("model.ckpt");
  }();
  return path;
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(run("").code == 1);
  CHECK(run("paint").code == 1);
  CHECK(run("gen-data --count 3").code == 1);
  CHECK(run("gen-data --out " + ws()("tiny") + " --count 3 --size 7").code == 1);
  CHECK(run("make-mask --kind blob --out " + ws()("m.pgm")).code == 1);
  CHECK(run("--help").code == 0);
}

TEST_CASE("gen-data writes images and a manifest deterministically") {
  const Run r = run("gen-data --out " + ws()("three") + " --count 3 --size 16 --seed 9 --kinds checker,rings");
  REQUIRE(r.code == 0);
  CHECK(echoed_config(r.out)["seed"] == 9);
  int pgm = 0;
  for (const auto& e : fs::directory_iterator(ws()("three"))) pgm += e.path().extension() == ".pgm";
  CHECK(pgm == 3);
  const auto manifest = nlohmann::json::parse(slurp(fs::path(ws()("three")) / "manifest.json"));
  CHECK(manifest["count"] == 3);
  CHECK(manifest["kinds"] == "checker,rings");
  const std::string first = slurp(fs::path(ws()("three")) / "img_00001.pgm");
  REQUIRE(run("gen-data --out " + ws()("three") + " --count 3 --size 16 --seed 9 --kinds checker,rings").code == 0);
  CHECK(slurp(fs::path(ws()("three")) / "img_00001.pgm") == first);
}

TEST_CASE("seed precedence: flag, then config file, then environment") {
  std::ofstream(ws()("seeded.json")) << R"({"seed": 5})";
  CHECK(echoed_config(run("make-mask --kind narrow --out " + ws()("m.pgm")).out)["seed"] == 0);
  CHECK(echoed_config(run("make-mask --kind narrow --out " + ws()("m.pgm"), "CONFILL_SEED=8").out)["seed"] == 8);
  CHECK(echoed_config(run("make-mask --kind narrow --out " + ws()("m.pgm") + " --config " + ws()("seeded.json"),
                          "CONFILL_SEED=8")
                          .out)["seed"] == 5);
  CHECK(echoed_config(run("make-mask --kind narrow --out " + ws()("m.pgm") + " --config " + ws()("seeded.json") +
                          " --seed 6",
                          "CONFILL_SEED=8")
                          .out)["seed"] == 6);
  CHECK(run("make-mask --kind narrow --out " + ws()("m.pgm"), "CONFILL_SEED=abc").code == 1);
  std::ofstream(ws()("bad.json")) << R"({"sampler": {"bogus": 1}})";
  CHECK(run("make-mask --kind narrow --out " + ws()("m.pgm") + " --config " + ws()("bad.json")).code == 1);
}

TEST_CASE("train is reproducible and reports missing data") {
  const std::string& model = small_model();
  REQUIRE(run("train --data " + ws()("data") + " --out " + ws()("again.ckpt") + " --config " + ws()("small.json") +
              " --seed 2")
              .code == 0);
  CHECK(slurp(model) == slurp(ws()("again.ckpt")));
  CHECK(run("train --data " + ws()("nowhere") + " --out " + ws()("x.ckpt")).code == 2);
  const Run zero = run("train --data " + ws()("data") + " --out " + ws()("zero.ckpt") + " --config " +
                       ws()("small.json") + " --epochs 0");
  CHECK(zero.code == 0);
  CHECK(slurp(ws()("zero.ckpt")).rfind("CFCK", 0) == 0);
}

TEST_CASE("inpaint outputs are reproducible and keep known pixels") {
  const std::string& model = small_model();
  const std::string image = ws()("data") + "/img_00003.pgm";
  REQUIRE(run("make-mask --kind half_vertical --size 8 --out " + ws()("half.pgm")).code == 0);
  REQUIRE(run("calibrate --model " + model + " --out " + ws()("gamma.json") + " --size 8 --config " +
              ws()("small.json"))
              .code == 0);
  const std::string base = "inpaint --model " + model + " --image " + image + " --gamma " + ws()("gamma.json") +
                           " --config " + ws()("small.json") + " --seed 4";
  REQUIRE(run(base + " --mask " + ws()("half.pgm") + " --out " + ws()("a.pgm") + " --trace " + ws()("a.tsv") +
              " --raw " + ws()("a_raw.pgm"))
              .code == 0);
  REQUIRE(run(base + " --mask " + ws()("half.pgm") + " --out " + ws()("b.pgm")).code == 0);
  CHECK(slurp(ws()("a.pgm")) == slurp(ws()("b.pgm")));
  CHECK(slurp(ws()("a.tsv")).rfind("step_index\tt\tprior_term\tconstraint_term\tgrad_norm\tjumped\n", 0) == 0);
  CHECK(fs::exists(ws()("a_raw.pgm")));

  REQUIRE(run(base + " --mask " + ws()("half.pgm") + " --out " + ws()("blend.pgm") + " --method blend").code == 0);
  CHECK(slurp(ws()("a.pgm")) != slurp(ws()("blend.pgm")));

  // Known columns are byte-identical to the input.
  const std::string in = slurp(image), out = slurp(ws()("a.pgm"));
  REQUIRE(in.size() == out.size());
  const std::size_t header = in.size() - 64;
  for (int y = 0; y < 8; ++y)
    for (int x = 4; x < 8; ++x) CHECK(in[header + static_cast<std::size_t>(y * 8 + x)] == out[header + static_cast<std::size_t>(y * 8 + x)]);

  {
    std::ofstream all(ws()("known.pgm"), std::ios::binary);
    all << "P2\n8 8\n255\n";
    for (int i = 0; i < 64; ++i) all << "255 ";
  }
  REQUIRE(run(base + " --mask " + ws()("known.pgm") + " --out " + ws()("same.pgm")).code == 0);
  CHECK(slurp(ws()("same.pgm")) == in);

  REQUIRE(run("make-mask --kind half_vertical --size 16 --out " + ws()("big.pgm")).code == 0);
  CHECK(run(base + " --mask " + ws()("big.pgm") + " --out " + ws()("c.pgm")).code == 2);
  CHECK(run(base + " --mask " + ws()("half.pgm") + " --out " + ws()("c.pgm") + " --method paint").code == 1);
  CHECK(run(base + " --mask " + ws()("missing.pgm") + " --out " + ws()("c.pgm")).code == 2);
}

TEST_CASE("bench, calibrate and features") {
  const std::string& model = small_model();
  const Run empty = run("bench --model " + model + " --data " + ws()("data") + " --out " + ws()("empty.csv") +
                        " --methods \"\" --count 2 --config " + ws()("small.json"));
  CHECK(empty.code == 0);
  CHECK(slurp(ws()("empty.csv")) ==
        "image_id,mask_kind,method,seed,masked_mse,psnr_db,ssim,wall_ms,steps_processed,jumps_taken\r\n");

  const std::string bench = "bench --model " + model + " --data " + ws()("data") +
                            " --methods confill_l2,blend --masks narrow --count 2 --config " + ws()("small.json");
  REQUIRE(run(bench + " --out " + ws()("one.csv") + " --jobs 1").code == 0);
  REQUIRE(run(bench + " --out " + ws()("two.csv") + " --jobs 2").code == 0);
  CHECK(slurp(ws()("one.csv")) == slurp(ws()("two.csv")));

  REQUIRE(run("calibrate --oracle --out " + ws()("oracle.json") + " --config " + ws()("small.json") + " --size 8")
              .code == 0);
  const auto table = nlohmann::json::parse(slurp(ws()("oracle.json")));
  CHECK(table.size() == 8);
  for (const auto& [t, v] : table.items()) CHECK(v.get<double>() == 1e-4);
  CHECK(run("calibrate --out " + ws()("x.json")).code == 1);

  {
    std::ofstream flat(ws()("flat.pgm"), std::ios::binary);
    flat << "P2\n16 16\n255\n";
    for (int i = 0; i < 256; ++i) flat << "90 ";
  }
  const Run f = run("features --image " + ws()("flat.pgm") + " --out " + ws()("feat"));
  REQUIRE(f.code == 0);
  CHECK(fs::exists(ws()("feat_weight.pgm")));
  const auto tail = f.out.substr(f.out.find("\n}\n") + 3);
  const auto scales = nlohmann::json::parse(tail);
  CHECK(scales["weight"]["min"].get<double>() == doctest::Approx(0.5));
  CHECK(scales["weight"]["max"].get<double>() == doctest::Approx(0.5));
}
