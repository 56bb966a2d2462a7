#include "confill/confill.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "confill/config.hpp"
#include "confill/error.hpp"
#include "confill/metrics.hpp"
#include "confill/sampler.hpp"

struct cf_config {
  confill::RunConfig value;
};
struct cf_image {
  confill::Image value;
};
struct cf_mask {
  confill::Mask value;
};
struct cf_model {
  confill::Model value;
};
struct cf_gamma {
  confill::GammaTable value;
};
struct cf_result {
  confill::Image output;
  confill::Image raw;
  std::vector<confill::TraceRow> trace;
  int steps = 0;
  int jumps = 0;
};

namespace {

thread_local std::string g_last_error;

cf_status fail(cf_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

struct ArgumentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class F>
cf_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return CF_OK;
  } catch (const ArgumentError& e) {
    return fail(CF_ERR_ARGUMENT, e.what());
  } catch (const confill::ConfigError& e) {
    return fail(CF_ERR_CONFIG, e.what());
  } catch (const confill::ContractError& e) {
    return fail(CF_ERR_CONTRACT, e.what());
  } catch (const confill::ParseError& e) {
    return fail(CF_ERR_PARSE, e.what());
  } catch (const confill::IoError& e) {
    return fail(CF_ERR_IO, e.what());
  } catch (const confill::NumericError& e) {
    return fail(CF_ERR_NUMERIC, e.what());
  } catch (const std::exception& e) {
    return fail(CF_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(CF_ERR_INTERNAL, "unknown failure");
  }
}

template <class T>
void need(const T* p, const char* what) {
  if (!p) throw ArgumentError(std::string(what) + " is null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<std::string> split_list(const char* text) {
  std::vector<std::string> out;
  if (!text) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<confill::Image> gather(const cf_image* const* images, std::size_t count) {
  std::vector<confill::Image> out;
  if (count) need(images, "images");
  for (std::size_t i = 0; i < count; ++i) {
    need(images[i], "image");
    out.push_back(images[i]->value);
  }
  return out;
}

confill::ConstraintKind constraint_for(const char* method) {
  need(method, "method");
  const confill::MethodId m = confill::parse_method(method);
  switch (m) {
    case confill::MethodId::ConFillCad: return confill::ConstraintKind::Cad;
    case confill::MethodId::ConFillWd: return confill::ConstraintKind::PlainWasserstein;
    case confill::MethodId::ConFillL2: return confill::ConstraintKind::L2;
    case confill::MethodId::Blend: break;
  }
  throw confill::ConfigError("method 'blend' has no constraint to calibrate");
}

void write_text(const std::string& path, const std::string& text) {
  confill::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

extern "C" {

const char* cf_last_error(void) { return g_last_error.c_str(); }
const char* cf_version(void) { return "1.0.0"; }
void cf_string_free(char* s) { std::free(s); }

// ---------------------------------------------------------------------------

cf_status cf_config_new(cf_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new cf_config{confill::parse_run_config("{}")};
  });
}

cf_status cf_config_from_json(const char* json, cf_config** out) {
  return guarded([&] {
    need(json, "json");
    need(out, "out");
    *out = new cf_config{confill::parse_run_config(json)};
  });
}

cf_status cf_config_merge_json(cf_config* cfg, const char* json_patch) {
  return guarded([&] {
    need(cfg, "config");
    need(json_patch, "json_patch");
    cfg->value = confill::merge_run_config(cfg->value, json_patch);
  });
}

cf_status cf_config_to_json(const cf_config* cfg, char** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    *out = dup_string(confill::run_config_to_json(cfg->value));
  });
}

void cf_config_free(cf_config* cfg) { delete cfg; }

// ---------------------------------------------------------------------------

cf_status cf_image_create(int width, int height, const double* data, cf_image** out) {
  return guarded([&] {
    need(out, "out");
    if (width < 1 || height < 1) throw ArgumentError("image dimensions must be positive");
    confill::Image img(width, height);
    if (data) std::copy(data, data + img.size(), img.pixels().begin());
    *out = new cf_image{std::move(img)};
  });
}

cf_status cf_image_load_pgm(const char* path, cf_image** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new cf_image{confill::load_pgm(path)};
  });
}

cf_status cf_image_save_pgm(const cf_image* img, const char* path) {
  return guarded([&] {
    need(img, "image");
    need(path, "path");
    confill::save_pgm(img->value, path);
  });
}

cf_status cf_image_size(const cf_image* img, int* width, int* height) {
  return guarded([&] {
    need(img, "image");
    if (width) *width = img->value.width();
    if (height) *height = img->value.height();
  });
}

cf_status cf_image_copy_data(const cf_image* img, double* out, size_t count) {
  return guarded([&] {
    need(img, "image");
    need(out, "out");
    if (count < img->value.size()) throw ArgumentError("output buffer too small");
    std::copy(img->value.pixels().begin(), img->value.pixels().end(), out);
  });
}

void cf_image_free(cf_image* img) { delete img; }

cf_status cf_dataset_image(int count, int size, uint64_t seed, const char* kinds, int index, cf_image** out) {
  return guarded([&] {
    need(out, "out");
    confill::ToyDatasetSpec spec;
    spec.count = count;
    spec.size = size;
    spec.seed = seed;
    if (kinds) {
      spec.kinds.clear();
      for (const auto& k : split_list(kinds)) spec.kinds.push_back(confill::parse_pattern_kind(k));
    }
    spec.validate();
    if (index < 0 || index >= count) throw ArgumentError("dataset index out of range");
    *out = new cf_image{confill::gen_dataset_image(spec, index)};
  });
}

cf_status cf_toy_image(const char* kind, uint64_t seed, int size, cf_image** out) {
  return guarded([&] {
    need(kind, "kind");
    need(out, "out");
    *out = new cf_image{confill::gen_toy_image(confill::parse_pattern_kind(kind), seed, size)};
  });
}

// ---------------------------------------------------------------------------

cf_status cf_mask_create(int width, int height, const unsigned char* known, cf_mask** out) {
  return guarded([&] {
    need(out, "out");
    need(known, "known");
    if (width < 1 || height < 1) throw ArgumentError("mask dimensions must be positive");
    confill::Mask m(width, height);
    for (std::size_t i = 0; i < m.size(); ++i) m.set(i, known[i] != 0);
    *out = new cf_mask{std::move(m)};
  });
}

cf_status cf_mask_make(const char* kind, uint64_t seed, int size, cf_mask** out) {
  return guarded([&] {
    need(kind, "kind");
    need(out, "out");
    *out = new cf_mask{confill::make_mask(confill::parse_mask_kind(kind), seed, size)};
  });
}

cf_status cf_mask_load_pgm(const char* path, cf_mask** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new cf_mask{confill::read_mask_pgm(confill::read_file(path))};
  });
}

cf_status cf_mask_save_pgm(const cf_mask* mask, const char* path) {
  return guarded([&] {
    need(mask, "mask");
    need(path, "path");
    confill::write_file(path, confill::write_mask_pgm(mask->value));
  });
}

cf_status cf_mask_unknown_fraction(const cf_mask* mask, double* out) {
  return guarded([&] {
    need(mask, "mask");
    need(out, "out");
    *out = mask->value.unknown_fraction();
  });
}

void cf_mask_free(cf_mask* mask) { delete mask; }

// ---------------------------------------------------------------------------

cf_status cf_model_train(const cf_config* cfg, const cf_image* const* images, size_t count,
                         cf_train_progress progress, void* user, cf_model** out, double* final_loss) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    const auto data = gather(images, count);
    const confill::NoiseSchedule sched = cfg->value.schedule.build();
    confill::TrainProgress cb;
    if (progress) cb = [&](int step, int total, double loss) { progress(step, total, loss, user); };
    confill::TrainResult r = confill::train(data, sched, cfg->value.train, cb);
    if (final_loss) *final_loss = r.final_running_loss;
    *out = new cf_model{{std::move(r.params), sched, cfg->value.train.seed}};
  });
}

cf_status cf_model_load(const char* path, cf_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new cf_model{confill::load_checkpoint(confill::read_file(path))};
  });
}

cf_status cf_model_save(const cf_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    confill::write_file(path, confill::save_checkpoint(model->value));
  });
}

cf_status cf_model_steps(const cf_model* model, int* steps) {
  return guarded([&] {
    need(model, "model");
    need(steps, "steps");
    *steps = model->value.schedule.steps();
  });
}

void cf_model_free(cf_model* model) { delete model; }

// ---------------------------------------------------------------------------

cf_status cf_gamma_calibrate(const cf_model* model, const cf_config* cfg, const char* method,
                             const cf_image* const* images, size_t count, int size, int oracle, cf_gamma** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    if (!oracle) need(model, "model");
    confill::ConFillConfig sc = cfg->value.sampler;
    sc.constraint = constraint_for(method);
    std::vector<confill::Image> set;
    if (images) {
      set = gather(images, count);
    } else {
      confill::ToyDatasetSpec spec;
      spec.count = sc.calib_images;
      spec.size = size;
      spec.seed = confill::derive_seed(sc.seed, "calibration-set");
      set = confill::gen_dataset(spec);
    }
    if (set.size() > static_cast<std::size_t>(sc.calib_images)) set.resize(static_cast<std::size_t>(sc.calib_images));
    const confill::NoiseSchedule sched = model ? model->value.schedule : cfg->value.schedule.build();
    confill::CalibrationPredictor predictor;
    if (oracle)
      predictor = [](const confill::Image&, int, const confill::Image&, const confill::Image& noise) { return noise; };
    else
      predictor = confill::model_predictor(model->value);
    *out = new cf_gamma{confill::calibrate_gamma(predictor, sched, set, cfg->value.features, sc)};
  });
}

cf_status cf_gamma_load(const char* path, cf_gamma** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    const auto bytes = confill::read_file(path);
    *out = new cf_gamma{confill::GammaTable::from_json(std::string(bytes.begin(), bytes.end()))};
  });
}

cf_status cf_gamma_save(const cf_gamma* gamma, const char* path) {
  return guarded([&] {
    need(gamma, "gamma");
    need(path, "path");
    write_text(path, gamma->value.to_json() + "\n");
  });
}

cf_status cf_gamma_get(const cf_gamma* gamma, int t, double* out) {
  return guarded([&] {
    need(gamma, "gamma");
    need(out, "out");
    *out = gamma->value.at(t);
  });
}

cf_status cf_gamma_steps(const cf_gamma* gamma, int* steps) {
  return guarded([&] {
    need(gamma, "gamma");
    need(steps, "steps");
    *steps = gamma->value.steps();
  });
}

void cf_gamma_free(cf_gamma* gamma) { delete gamma; }

// ---------------------------------------------------------------------------

cf_status cf_inpaint(const cf_model* model, const cf_config* cfg, const cf_image* image, const cf_mask* mask,
                     const char* method, uint64_t seed, const cf_gamma* gamma, cf_result** out) {
  return guarded([&] {
    need(model, "model");
    need(cfg, "config");
    need(image, "image");
    need(mask, "mask");
    need(method, "method");
    need(out, "out");
    const confill::MethodId m = confill::parse_method(method);
    auto res = std::make_unique<cf_result>();
    if (m == confill::MethodId::Blend) {
      res->output = confill::blend_baseline(image->value, mask->value, model->value, seed);
      res->raw = res->output;
      res->steps = model->value.schedule.steps();
    } else {
      confill::ConFillConfig sc = cfg->value.sampler;
      sc.constraint = constraint_for(method);
      sc.seed = seed;
      confill::InpaintResult r =
          confill::inpaint(image->value, mask->value, model->value, cfg->value.features, sc,
                           gamma ? &gamma->value : nullptr);
      res->output = std::move(r.output);
      res->raw = std::move(r.raw);
      res->trace = std::move(r.trace);
      res->steps = static_cast<int>(res->trace.size());
      res->jumps = r.jumps_taken;
    }
    *out = res.release();
  });
}

cf_status cf_result_output(const cf_result* result, cf_image** out) {
  return guarded([&] {
    need(result, "result");
    need(out, "out");
    *out = new cf_image{result->output};
  });
}

cf_status cf_result_raw(const cf_result* result, cf_image** out) {
  return guarded([&] {
    need(result, "result");
    need(out, "out");
    *out = new cf_image{result->raw};
  });
}

cf_status cf_result_steps(const cf_result* result, int* steps, int* jumps) {
  return guarded([&] {
    need(result, "result");
    if (steps) *steps = result->steps;
    if (jumps) *jumps = result->jumps;
  });
}

cf_status cf_result_save_trace(const cf_result* result, const char* path) {
  return guarded([&] {
    need(result, "result");
    need(path, "path");
    std::ostringstream ss;
    confill::write_trace_tsv(ss, result->trace);
    write_text(path, ss.str());
  });
}

void cf_result_free(cf_result* result) { delete result; }

// ---------------------------------------------------------------------------

cf_status cf_bench(const cf_model* model, const cf_config* cfg, const cf_image* const* images, size_t count,
                   const char* masks, const char* methods, uint64_t seed, int jobs, int record_timing,
                   const cf_gamma* gamma_cad, const char* csv_path, const char* summary_path,
                   cf_bench_progress progress, void* user) {
  return guarded([&] {
    need(model, "model");
    need(cfg, "config");
    need(csv_path, "csv_path");
    const auto data = gather(images, count);
    confill::BenchOptions opts;
    for (const auto& m : split_list(masks)) opts.masks.push_back(confill::parse_mask_kind(m));
    for (const auto& m : split_list(methods)) opts.methods.push_back(confill::parse_method(m));
    opts.seed = seed;
    opts.jobs = jobs;
    opts.record_timing = record_timing != 0;
    if (gamma_cad) opts.gamma.emplace(confill::ConstraintKind::Cad, gamma_cad->value);
    confill::BenchProgress cb;
    if (progress) cb = [&](std::size_t d, std::size_t t) { progress(d, t, user); };
    const confill::BenchReport report =
        confill::run_benchmark(data, model->value, cfg->value.features, cfg->value.sampler, opts, cb);
    std::ostringstream csv;
    confill::write_bench_csv(csv, report);
    write_text(csv_path, csv.str());
    if (summary_path) {
      std::ostringstream sum;
      confill::write_bench_summary_csv(sum, report);
      write_text(summary_path, sum.str());
    }
  });
}

cf_status cf_features_dump(const cf_config* cfg, const cf_image* image, const cf_mask* mask, const char* prefix,
                           char** scales_json) {
  return guarded([&] {
    need(cfg, "config");
    need(image, "image");
    need(prefix, "prefix");
    const confill::Image& img = image->value;
    const confill::CellGrid grid = confill::build_cell_grid(img, cfg->value.features, confill::derive_seed(cfg->value.seed, "cells"),
                                                            mask ? &mask->value : nullptr);
    struct Channel {
      const char* name;
      double (*get)(const confill::Cell&);
    };
    const Channel channels[] = {
        {"weight", [](const confill::Cell& c) { return c.weight; }},
        {"variance", [](const confill::Cell& c) { return c.variance; }},
        {"edge", [](const confill::Cell& c) { return c.edge_density; }},
        {"samples", [](const confill::Cell& c) { return static_cast<double>(c.samples); }},
    };
    nlohmann::ordered_json scales = nlohmann::ordered_json::object();
    for (const auto& ch : channels) {
      confill::Image map(img.width(), img.height());
      for (const auto& c : grid.cells())
        for (int y = c.rect.y0; y < c.rect.y0 + c.rect.h; ++y)
          for (int x = c.rect.x0; x < c.rect.x0 + c.rect.w; ++x) map.at(x, y) = ch.get(c);
      const auto [lo_it, hi_it] = std::minmax_element(map.pixels().begin(), map.pixels().end());
      const double lo = *lo_it, hi = *hi_it;
      const double span = hi - lo;
      confill::Image scaled(img.width(), img.height());
      for (std::size_t i = 0; i < map.size(); ++i) scaled[i] = span > 0 ? (map[i] - lo) / span : 0.0;
      confill::save_pgm(scaled, std::string(prefix) + "_" + ch.name + ".pgm");
      // value = offset + byte * scale
      scales[ch.name] = {{"offset", lo}, {"scale", span / 255.0}, {"min", lo}, {"max", hi}};
    }
    if (scales_json) *scales_json = dup_string(scales.dump(2));
  });
}

}  // extern "C"
