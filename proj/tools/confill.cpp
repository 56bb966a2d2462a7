// Command-line front end; talks to the library only through confill.h.
#include <confill/confill.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumeric = 3;

struct Failure {
  int code;
  std::string message;
};

int exit_code_for(cf_status s) {
  switch (s) {
    case CF_OK: return kExitOk;
    case CF_ERR_ARGUMENT:
    case CF_ERR_CONFIG: return kExitUsage;
    case CF_ERR_NUMERIC: return kExitNumeric;
    default: return kExitIo;
  }
}

void check(cf_status s) {
  if (s != CF_OK) throw Failure{exit_code_for(s), cf_last_error()};
}

// Owning wrappers for the opaque handles.
template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  Handle(Handle&& o) noexcept : p(o.p) { o.p = nullptr; }
  ~Handle() {
    if (p) Free(p);
  }
  T** out() { return &p; }
  T* get() const { return p; }
};
using ConfigH = Handle<cf_config, cf_config_free>;
using ImageH = Handle<cf_image, cf_image_free>;
using MaskH = Handle<cf_mask, cf_mask_free>;
using ModelH = Handle<cf_model, cf_model_free>;
using GammaH = Handle<cf_gamma, cf_gamma_free>;
using ResultH = Handle<cf_result, cf_result_free>;

std::string owned_string(char* s) {
  std::string out = s ? s : "";
  cf_string_free(s);
  return out;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kExitIo, "cannot read " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw Failure{kExitIo, "cannot write " + path};
}

/// Options shared by every subcommand.
struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

/// Builds the effective configuration: defaults, then the --config file,
/// then flags. The seed falls back to CONFILL_SEED when neither the file nor
/// a flag sets it. The result is echoed to standard output.
ConfigH effective_config(const Common& common, nlohmann::json flags) {
  ConfigH cfg;
  check(cf_config_new(cfg.out()));
  bool file_seed = false;
  if (!common.config_path.empty()) {
    const std::string text = read_text(common.config_path);
    check(cf_config_merge_json(cfg.get(), text.c_str()));
    const auto doc = nlohmann::json::parse(text, nullptr, false);
    file_seed = doc.is_object() && doc.contains("seed");
  }
  if (common.seed) {
    flags["seed"] = *common.seed;
  } else if (!file_seed) {
    if (const char* env = std::getenv("CONFILL_SEED")) {
      char* end = nullptr;
      const unsigned long long v = std::strtoull(env, &end, 10);
      if (!*env || *end) throw Failure{kExitUsage, std::string("CONFILL_SEED is not an integer: ") + env};
      flags["seed"] = v;
    }
  }
  if (!flags.empty()) check(cf_config_merge_json(cfg.get(), flags.dump().c_str()));
  char* json = nullptr;
  check(cf_config_to_json(cfg.get(), &json));
  std::cout << owned_string(json) << "\n";
  return cfg;
}

std::uint64_t config_seed(const ConfigH& cfg) {
  char* json = nullptr;
  check(cf_config_to_json(cfg.get(), &json));
  return nlohmann::json::parse(owned_string(json))["seed"].get<std::uint64_t>();
}

nlohmann::json config_doc(const ConfigH& cfg) {
  char* json = nullptr;
  check(cf_config_to_json(cfg.get(), &json));
  return nlohmann::json::parse(owned_string(json));
}

std::vector<ImageH> load_dir(const std::string& dir, std::size_t limit = 0) {
  if (!fs::is_directory(dir)) throw Failure{kExitIo, "data directory not found: " + dir};
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (limit && files.size() > limit) files.resize(limit);
  if (files.empty()) throw Failure{kExitIo, "no .pgm images in " + dir};
  std::vector<ImageH> images;
  for (const auto& f : files) {
    ImageH img;
    check(cf_image_load_pgm(f.string().c_str(), img.out()));
    images.push_back(std::move(img));
  }
  return images;
}

std::vector<const cf_image*> raw_pointers(const std::vector<ImageH>& images) {
  std::vector<const cf_image*> out;
  for (const auto& i : images) out.push_back(i.get());
  return out;
}

void add_common(CLI::App* app, Common& common) {
  app->add_option("--config", common.config_path, "JSON configuration file");
  app->add_option("--seed", common.seed, "Global seed (falls back to CONFILL_SEED)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ConFill: context-adaptive discrepancy guided diffusion inpainting"};
  app.require_subcommand(1);

  // gen-data
  Common gen_common;
  std::string gen_out, gen_kinds;
  int gen_count = 0, gen_size = 32;
  auto* gen = app.add_subcommand("gen-data", "Write a procedural toy dataset");
  add_common(gen, gen_common);
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--count", gen_count, "Number of images")->required();
  gen->add_option("--size", gen_size, "Square image size");
  gen->add_option("--kinds", gen_kinds, "Comma-separated pattern kinds");

  // make-mask
  Common mask_common;
  std::string mask_kind = "half_vertical", mask_out;
  int mask_size = 32;
  auto* mk = app.add_subcommand("make-mask", "Write a generated mask");
  add_common(mk, mask_common);
  mk->add_option("--kind", mask_kind, "narrow, wide1, wide2, half_vertical, half_horizontal, expand");
  mk->add_option("--size", mask_size, "Square mask size");
  mk->add_option("--out", mask_out, "Output PGM")->required();

  // train
  Common train_common;
  std::string train_data, train_out;
  std::optional<int> train_epochs;
  auto* tr = app.add_subcommand("train", "Train the noise predictor");
  add_common(tr, train_common);
  tr->add_option("--data", train_data, "Directory of PGM images")->required();
  tr->add_option("--out", train_out, "Checkpoint path")->required();
  tr->add_option("--epochs", train_epochs, "Override train.epochs");

  // inpaint
  Common inp_common;
  std::string inp_model, inp_image, inp_mask, inp_out, inp_method = "confill_cad", inp_trace, inp_raw, inp_gamma;
  auto* inp = app.add_subcommand("inpaint", "Complete the unknown region of an image");
  add_common(inp, inp_common);
  inp->add_option("--model", inp_model, "Checkpoint")->required();
  inp->add_option("--image", inp_image, "Reference PGM")->required();
  inp->add_option("--mask", inp_mask, "Mask PGM (255 known, 0 unknown)")->required();
  inp->add_option("--out", inp_out, "Composited output PGM")->required();
  inp->add_option("--method", inp_method, "confill_cad, confill_wd, confill_l2 or blend");
  inp->add_option("--trace", inp_trace, "Per-step trace TSV");
  inp->add_option("--raw", inp_raw, "Raw clean-image prediction PGM");
  inp->add_option("--gamma", inp_gamma, "Calibrated gamma table JSON");

  // bench
  Common bench_common;
  std::string bench_model, bench_data, bench_out, bench_summary, bench_gamma;
  std::string bench_masks = "half_vertical", bench_methods = "confill_cad,confill_wd,confill_l2,blend";
  int bench_jobs = 1;
  std::size_t bench_count = 0;
  bool bench_timing = false;
  auto* be = app.add_subcommand("bench", "Benchmark methods over a dataset");
  add_common(be, bench_common);
  be->add_option("--model", bench_model, "Checkpoint")->required();
  be->add_option("--data", bench_data, "Directory of PGM images")->required();
  be->add_option("--out", bench_out, "Per-run CSV")->required();
  be->add_option("--summary", bench_summary, "Aggregate CSV");
  be->add_option("--masks", bench_masks, "Comma-separated mask kinds");
  be->add_option("--methods", bench_methods, "Comma-separated methods (may be empty)");
  be->add_option("--jobs", bench_jobs, "Worker threads")->check(CLI::PositiveNumber);
  be->add_option("--count", bench_count, "Use only the first N images");
  be->add_option("--gamma", bench_gamma, "Gamma table for confill_cad");
  be->add_flag("--timing", bench_timing, "Record wall-clock time (makes the CSV run-dependent)");

  // calibrate
  Common cal_common;
  std::string cal_model, cal_out, cal_method = "confill_cad", cal_data;
  int cal_size = 32;
  bool cal_oracle = false;
  auto* cal = app.add_subcommand("calibrate", "Calibrate the per-step gamma table");
  add_common(cal, cal_common);
  cal->add_option("--model", cal_model, "Checkpoint (optional with --oracle)");
  cal->add_option("--out", cal_out, "gamma.json")->required();
  cal->add_option("--method", cal_method, "Constraint: confill_cad, confill_wd or confill_l2");
  cal->add_option("--data", cal_data, "Calibration images (default: toy set)");
  cal->add_option("--size", cal_size, "Toy calibration image size");
  cal->add_flag("--oracle", cal_oracle, "Use the true noise instead of the network");

  // features
  Common feat_common;
  std::string feat_image, feat_mask, feat_prefix;
  auto* fe = app.add_subcommand("features", "Dump per-cell weight, variance, edge density and sample maps");
  add_common(fe, feat_common);
  fe->add_option("--image", feat_image, "Input PGM")->required();
  fe->add_option("--mask", feat_mask, "Optional mask PGM");
  fe->add_option("--out", feat_prefix, "Output prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) {
      nlohmann::json flags;
      flags["dataset"] = {{"count", gen_count}, {"size", gen_size}};
      if (!gen_kinds.empty()) flags["dataset"]["kinds"] = gen_kinds;
      ConfigH cfg = effective_config(gen_common, flags);
      const auto doc = config_doc(cfg);
      const auto& ds = doc["dataset"];
      const std::string kinds = ds["kinds"].get<std::string>();
      std::error_code ec;
      fs::create_directories(gen_out, ec);
      if (ec) throw Failure{kExitIo, "cannot create " + gen_out + ": " + ec.message()};
      const int count = ds["count"].get<int>(), size = ds["size"].get<int>();
      const std::uint64_t seed = doc["seed"].get<std::uint64_t>();
      for (int i = 0; i < count; ++i) {
        ImageH img;
        check(cf_dataset_image(count, size, seed, kinds.c_str(), i, img.out()));
        char name[32];
        std::snprintf(name, sizeof name, "img_%05d.pgm", i);
        check(cf_image_save_pgm(img.get(), (fs::path(gen_out) / name).string().c_str()));
      }
      nlohmann::ordered_json manifest;
      manifest["count"] = count;
      manifest["size"] = size;
      manifest["seed"] = seed;
      manifest["kinds"] = kinds;
      write_text((fs::path(gen_out) / "manifest.json").string(), manifest.dump(2) + "\n");
      std::cout << "wrote " << count << " images to " << gen_out << "\n";
    } else if (*mk) {
      ConfigH cfg = effective_config(mask_common, nlohmann::json::object());
      MaskH mask;
      check(cf_mask_make(mask_kind.c_str(), config_seed(cfg), mask_size, mask.out()));
      check(cf_mask_save_pgm(mask.get(), mask_out.c_str()));
      double frac = 0.0;
      check(cf_mask_unknown_fraction(mask.get(), &frac));
      std::cout << "unknown fraction " << frac << "\n";
    } else if (*tr) {
      nlohmann::json flags = nlohmann::json::object();
      if (train_epochs) flags["train"] = {{"epochs", *train_epochs}};
      ConfigH cfg = effective_config(train_common, flags);
      const auto images = load_dir(train_data);
      const auto ptrs = raw_pointers(images);
      ModelH model;
      double loss = 0.0;
      auto progress = [](int step, int total, double l, void*) {
        if (step % 500 == 0 || step == total) std::cerr << "step " << step << "/" << total << " loss " << l << "\n";
      };
      check(cf_model_train(cfg.get(), ptrs.data(), ptrs.size(), progress, nullptr, model.out(), &loss));
      check(cf_model_save(model.get(), train_out.c_str()));
      std::cout << "final loss " << loss << "\n";
    } else if (*inp) {
      ConfigH cfg = effective_config(inp_common, nlohmann::json::object());
      ModelH model;
      check(cf_model_load(inp_model.c_str(), model.out()));
      ImageH image;
      check(cf_image_load_pgm(inp_image.c_str(), image.out()));
      MaskH mask;
      check(cf_mask_load_pgm(inp_mask.c_str(), mask.out()));
      GammaH gamma;
      if (!inp_gamma.empty()) check(cf_gamma_load(inp_gamma.c_str(), gamma.out()));
      ResultH result;
      check(cf_inpaint(model.get(), cfg.get(), image.get(), mask.get(), inp_method.c_str(), config_seed(cfg),
                       gamma.get(), result.out()));
      ImageH out;
      check(cf_result_output(result.get(), out.out()));
      check(cf_image_save_pgm(out.get(), inp_out.c_str()));
      if (!inp_raw.empty()) {
        ImageH raw;
        check(cf_result_raw(result.get(), raw.out()));
        check(cf_image_save_pgm(raw.get(), inp_raw.c_str()));
      }
      if (!inp_trace.empty()) check(cf_result_save_trace(result.get(), inp_trace.c_str()));
      int steps = 0, jumps = 0;
      check(cf_result_steps(result.get(), &steps, &jumps));
      std::cout << "steps " << steps << " jumps " << jumps << "\n";
    } else if (*be) {
      ConfigH cfg = effective_config(bench_common, nlohmann::json::object());
      ModelH model;
      check(cf_model_load(bench_model.c_str(), model.out()));
      const auto images = load_dir(bench_data, bench_count);
      const auto ptrs = raw_pointers(images);
      GammaH gamma;
      if (!bench_gamma.empty()) check(cf_gamma_load(bench_gamma.c_str(), gamma.out()));
      auto progress = [](std::size_t done, std::size_t total, void*) {
        if (done % 10 == 0 || done == total) std::cerr << "bench " << done << "/" << total << "\n";
      };
      check(cf_bench(model.get(), cfg.get(), ptrs.data(), ptrs.size(), bench_masks.c_str(), bench_methods.c_str(),
                     config_seed(cfg), bench_jobs, bench_timing ? 1 : 0, gamma.get(), bench_out.c_str(),
                     bench_summary.empty() ? nullptr : bench_summary.c_str(), progress, nullptr));
      std::cout << "wrote " << bench_out << "\n";
    } else if (*cal) {
      ConfigH cfg = effective_config(cal_common, nlohmann::json::object());
      ModelH model;
      if (!cal_model.empty()) check(cf_model_load(cal_model.c_str(), model.out()));
      else if (!cal_oracle) throw Failure{kExitUsage, "calibrate needs --model unless --oracle is given"};
      std::vector<ImageH> images;
      if (!cal_data.empty()) images = load_dir(cal_data);
      const auto ptrs = raw_pointers(images);
      GammaH gamma;
      check(cf_gamma_calibrate(model.get(), cfg.get(), cal_method.c_str(), images.empty() ? nullptr : ptrs.data(),
                               ptrs.size(), cal_size, cal_oracle ? 1 : 0, gamma.out()));
      check(cf_gamma_save(gamma.get(), cal_out.c_str()));
      int steps = 0;
      double first = 0.0, last = 0.0;
      check(cf_gamma_steps(gamma.get(), &steps));
      check(cf_gamma_get(gamma.get(), 1, &first));
      check(cf_gamma_get(gamma.get(), steps, &last));
      std::cout << "gamma'^2 at t=1: " << first << ", at t=" << steps << ": " << last << "\n";
    } else if (*fe) {
      ConfigH cfg = effective_config(feat_common, nlohmann::json::object());
      ImageH image;
      check(cf_image_load_pgm(feat_image.c_str(), image.out()));
      MaskH mask;
      if (!feat_mask.empty()) check(cf_mask_load_pgm(feat_mask.c_str(), mask.out()));
      char* scales = nullptr;
      check(cf_features_dump(cfg.get(), image.get(), mask.get(), feat_prefix.c_str(), &scales));
      std::cout << owned_string(scales) << "\n";
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}
