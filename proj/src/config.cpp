#include "confill/config.hpp"

#include <initializer_list>
#include <type_traits>

#include <json.hpp>

#include "confill/error.hpp"
#include "confill/rng.hpp"

namespace confill {

using nlohmann::ordered_json;

void RunConfig::validate() const {
  features.validate();
  (void)schedule.build();
  train.validate();
  sampler.validate();
  dataset.validate();
}

namespace {

std::string kinds_to_string(const std::vector<PatternKind>& kinds) {
  std::string s;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (i) s += ',';
    s += to_string(kinds[i]);
  }
  return s;
}

std::vector<PatternKind> kinds_from_string(std::string_view s) {
  std::vector<PatternKind> kinds;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const auto end = comma == std::string_view::npos ? s.size() : comma;
    if (end > start) kinds.push_back(parse_pattern_kind(s.substr(start, end - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return kinds;
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  const auto& f = c.features;
  j["features"] = {{"cell_size", f.cell_size},
                   {"gabor_orientations", f.gabor_orientations},
                   {"gabor_wavelength", f.gabor_wavelength},
                   {"edge_threshold", f.edge_threshold},
                   {"psi", f.psi},
                   {"alpha", f.alpha},
                   {"beta", f.beta},
                   {"upsilon", f.upsilon},
                   {"tau", f.tau},
                   {"max_samples", f.max_samples},
                   {"invert_texture_term", f.invert_texture_term}};
  const auto& s = c.schedule;
  j["schedule"] = {{"T", s.steps}, {"beta_1", s.beta_1}, {"beta_T", s.beta_T}, {"eta", s.eta}};
  const auto& t = c.train;
  j["train"] = {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate},
                {"adam_beta1", t.adam_beta1},
                {"adam_beta2", t.adam_beta2},
                {"adam_epsilon", t.adam_epsilon}};
  const auto& p = c.sampler;
  j["sampler"] = {{"gradient_steps", p.gradient_steps},
                  {"step_size", p.step_size},
                  {"init_steps", p.init_steps},
                  {"travel_interval", p.travel_interval},
                  {"travel_count", p.travel_count},
                  {"clip_norm", p.clip_norm},
                  {"gamma_floor", p.gamma_floor},
                  {"calib_images", p.calib_images}};
  const auto& d = c.dataset;
  j["dataset"] = {{"count", d.count}, {"size", d.size}, {"kinds", kinds_to_string(d.kinds)}};
  j["paths"] = {{"data", c.paths.data}, {"model", c.paths.model}, {"gamma", c.paths.gamma}, {"out", c.paths.out}};
  return j;
}

template <class T>
void read_value(const nlohmann::json& v, const std::string& key, T& out) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError("");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("");
    } else {
      if (!v.is_string()) throw ConfigError("");
    }
    out = v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

struct Section {
  const nlohmann::json& node;
  std::string name;

  template <class T>
  void field(const char* key, T& out) const {
    if (auto it = node.find(key); it != node.end()) read_value(*it, name + "." + key, out);
  }
  void reject_unknown(std::initializer_list<const char*> known) const {
    for (auto it = node.begin(); it != node.end(); ++it) {
      bool ok = false;
      for (const char* k : known) ok = ok || it.key() == k;
      if (!ok) throw ConfigError("unknown config key '" + name + "." + it.key() + "'");
    }
  }
};

const nlohmann::json* section(const nlohmann::json& root, const char* name) {
  auto it = root.find(name);
  if (it == root.end()) return nullptr;
  if (!it->is_object()) throw ConfigError(std::string("config section '") + name + "' must be an object");
  return &*it;
}

void apply_document(RunConfig& c, const nlohmann::json& root) {
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  for (auto it = root.begin(); it != root.end(); ++it) {
    static const char* top[] = {"seed", "features", "schedule", "train", "sampler", "dataset", "paths"};
    bool ok = false;
    for (const char* k : top) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("unknown config key '" + it.key() + "'");
  }
  if (auto it = root.find("seed"); it != root.end()) read_value(*it, "seed", c.seed);

  if (const auto* n = section(root, "features")) {
    Section s{*n, "features"};
    s.reject_unknown({"cell_size", "gabor_orientations", "gabor_wavelength", "edge_threshold", "psi", "alpha", "beta",
                      "upsilon", "tau", "max_samples", "invert_texture_term"});
    auto& f = c.features;
    s.field("cell_size", f.cell_size);
    s.field("gabor_orientations", f.gabor_orientations);
    s.field("gabor_wavelength", f.gabor_wavelength);
    s.field("edge_threshold", f.edge_threshold);
    s.field("psi", f.psi);
    s.field("alpha", f.alpha);
    s.field("beta", f.beta);
    s.field("upsilon", f.upsilon);
    s.field("tau", f.tau);
    s.field("max_samples", f.max_samples);
    s.field("invert_texture_term", f.invert_texture_term);
  }
  if (const auto* n = section(root, "schedule")) {
    Section s{*n, "schedule"};
    s.reject_unknown({"T", "beta_1", "beta_T", "eta"});
    s.field("T", c.schedule.steps);
    s.field("beta_1", c.schedule.beta_1);
    s.field("beta_T", c.schedule.beta_T);
    s.field("eta", c.schedule.eta);
  }
  if (const auto* n = section(root, "train")) {
    Section s{*n, "train"};
    s.reject_unknown({"epochs", "batch_size", "learning_rate", "adam_beta1", "adam_beta2", "adam_epsilon"});
    s.field("epochs", c.train.epochs);
    s.field("batch_size", c.train.batch_size);
    s.field("learning_rate", c.train.learning_rate);
    s.field("adam_beta1", c.train.adam_beta1);
    s.field("adam_beta2", c.train.adam_beta2);
    s.field("adam_epsilon", c.train.adam_epsilon);
  }
  if (const auto* n = section(root, "sampler")) {
    Section s{*n, "sampler"};
    s.reject_unknown({"gradient_steps", "step_size", "init_steps", "travel_interval", "travel_count", "clip_norm",
                      "gamma_floor", "calib_images"});
    auto& p = c.sampler;
    s.field("gradient_steps", p.gradient_steps);
    s.field("step_size", p.step_size);
    s.field("init_steps", p.init_steps);
    s.field("travel_interval", p.travel_interval);
    s.field("travel_count", p.travel_count);
    s.field("clip_norm", p.clip_norm);
    s.field("gamma_floor", p.gamma_floor);
    s.field("calib_images", p.calib_images);
  }
  if (const auto* n = section(root, "dataset")) {
    Section s{*n, "dataset"};
    s.reject_unknown({"count", "size", "kinds"});
    s.field("count", c.dataset.count);
    s.field("size", c.dataset.size);
    std::string kinds;
    if (n->contains("kinds")) {
      s.field("kinds", kinds);
      c.dataset.kinds = kinds_from_string(kinds);
    }
  }
  if (const auto* n = section(root, "paths")) {
    Section s{*n, "paths"};
    s.reject_unknown({"data", "model", "gamma", "out"});
    s.field("data", c.paths.data);
    s.field("model", c.paths.model);
    s.field("gamma", c.paths.gamma);
    s.field("out", c.paths.out);
  }
  c.train.seed = derive_seed(c.seed, "train");
  c.dataset.seed = c.seed;
  c.sampler.seed = c.seed;
}

nlohmann::json parse_json(std::string_view text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text) { return merge_run_config(RunConfig{}, json_text); }

RunConfig merge_run_config(const RunConfig& base, std::string_view json_patch) {
  RunConfig c = base;
  apply_document(c, parse_json(json_patch));
  c.validate();
  return c;
}

std::string run_config_to_json(const RunConfig& cfg) { return to_json(cfg).dump(2); }

}  // namespace confill
