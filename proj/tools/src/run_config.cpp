#include "evalign_tools/run_config.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <json.hpp>
#include <sstream>
#include <string_view>
#include <thread>

#include "evalign/error.hpp"

namespace evalign::cli {
namespace {

using nlohmann::json;

// Walks one JSON object, remembering the key path for error messages.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + " must be an object");
  }

  void allow(std::initializer_list<std::string_view> keys) const {
    for (const auto& item : obj_.items()) {
      if (std::find(keys.begin(), keys.end(), item.key()) == keys.end()) {
        throw ConfigError("unknown config key '" + key_path(item.key()) + "'");
      }
    }
  }

  const json* find(std::string_view key) const {
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string key_path(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  void read(std::string_view key, double& out) const {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw type_error(key, "a number");
      out = v->get<double>();
      if (!std::isfinite(out)) throw type_error(key, "a finite number");
    }
  }

  template <std::unsigned_integral U>
  void read(std::string_view key, U& out) const {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) throw type_error(key, "a non-negative integer");
      out = v->get<U>();
    }
  }

  void read(std::string_view key, std::string& out) const {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw type_error(key, "a string");
      out = v->get<std::string>();
    }
  }

  void read(std::string_view key, motion::Range& out) const {
    if (const json* v = find(key)) {
      if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number()) {
        throw type_error(key, "a [min, max] pair of numbers");
      }
      out = {(*v)[0].get<double>(), (*v)[1].get<double>()};
    }
  }

  ConfigError type_error(std::string_view key, std::string_view expected) const {
    return ConfigError("config key '" + key_path(key) + "' must be " + std::string(expected));
  }

  std::optional<Section> child(std::string_view key) const {
    if (const json* v = find(key)) return Section(*v, key_path(key));
    return std::nullopt;
  }

 private:
  std::string where() const { return path_.empty() ? "config" : "config key '" + path_ + "'"; }

  const json& obj_;
  std::string path_;
};

align::GaussianShape parse_shape(const std::string& name) {
  if (name == "pdf") return align::GaussianShape::Pdf;
  if (name == "cdf") return align::GaussianShape::Cdf;
  throw ConfigError("unknown gaussian_shape '" + name + "' (expected pdf or cdf)");
}

std::string_view shape_name(align::GaussianShape shape) {
  return shape == align::GaussianShape::Pdf ? "pdf" : "cdf";
}

json range_json(const motion::Range& r) { return json::array({r.min, r.max}); }

}  // namespace

void RunConfig::validate() const {
  world_spec().validate();
  train.validate();
  if (text.steps > 100000) throw ConfigError("eval.text_steps is unreasonably large");
  if (!(text.learning_rate > 0.0)) throw ConfigError("eval.text_learning_rate must be positive");
  if (!(text.tau > 0.0)) throw ConfigError("eval.text_tau must be positive");
  if (ablation_seeds.empty()) throw ConfigError("ablation.seeds must not be empty");
}

std::size_t RunConfig::worker_count() const {
  if (threads > 0) return threads;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

train::WorldSpec RunConfig::world_spec() const {
  train::WorldSpec spec = world;
  spec.seed = seed;
  return spec;
}

RunConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }

  RunConfig cfg;
  const Section root(doc, "");
  root.allow({"seed", "threads", "paths", "world", "motion", "emitter", "loss", "train", "eval",
              "ablation"});
  root.read("seed", cfg.seed);
  root.read("threads", cfg.threads);

  if (auto s = root.child("paths")) {
    s->allow({"input", "out", "encoder"});
    s->read("input", cfg.paths.input);
    s->read("out", cfg.paths.out);
    s->read("encoder", cfg.paths.encoder);
  }

  auto& w = cfg.world;
  if (auto s = root.child("world")) {
    s->allow({"n_train_classes", "n_test_classes", "dim", "train_per_class",
              "calibration_per_class", "test_per_class", "pool_per_class", "sigma_img",
              "image_subspace_dim", "image_size", "feature_size", "texture_gain",
              "texture_period"});
    s->read("n_train_classes", w.n_train_classes);
    s->read("n_test_classes", w.n_test_classes);
    s->read("dim", w.dim);
    s->read("train_per_class", w.train_per_class);
    s->read("calibration_per_class", w.calibration_per_class);
    s->read("test_per_class", w.test_per_class);
    s->read("pool_per_class", w.pool_per_class);
    s->read("sigma_img", w.sigma_img);
    s->read("image_subspace_dim", w.image_subspace_dim);
    s->read("image_size", w.image_size);
    s->read("feature_size", w.feature_size);
    s->read("texture_gain", w.texture_gain);
    s->read("texture_period", w.texture_period);
  }

  if (auto s = root.child("motion")) {
    auto& m = w.motion;
    s->allow({"kind", "dx", "dy", "scale_end", "angle_end", "duration", "n_frames"});
    std::string kind = m.forced_kind ? std::string(motion::to_string(*m.forced_kind)) : "random";
    s->read("kind", kind);
    if (kind == "random") {
      m.forced_kind.reset();
    } else {
      m.forced_kind = motion::parse_motion_kind(kind);
    }
    s->read("dx", m.dx);
    s->read("dy", m.dy);
    s->read("scale_end", m.scale_end);
    s->read("angle_end", m.angle_end);
    s->read("duration", m.duration);
    s->read("n_frames", m.n_frames);
  }

  if (auto s = root.child("emitter")) {
    auto& e = w.emitter;
    s->allow({"theta_pos", "theta_neg", "log_eps", "refractory", "threshold_noise_sigma"});
    s->read("theta_pos", e.theta_pos);
    s->read("theta_neg", e.theta_neg);
    s->read("log_eps", e.log_eps);
    s->read("refractory", e.refractory);
    s->read("threshold_noise_sigma", e.threshold_noise_sigma);
  }

  if (auto s = root.child("loss")) {
    auto& l = cfg.train.loss;
    s->allow({"tau", "gaussian_mu", "gaussian_sigma", "gaussian_shape", "knn_k"});
    s->read("tau", l.tau);
    s->read("gaussian_mu", l.gaussian_mu);
    s->read("gaussian_sigma", l.gaussian_sigma);
    std::string shape(shape_name(l.gaussian_shape));
    s->read("gaussian_shape", shape);
    l.gaussian_shape = parse_shape(shape);
    s->read("knn_k", l.knn_k);
  }

  if (auto s = root.child("train")) {
    auto& t = cfg.train;
    s->allow({"epochs", "batch_size", "learning_rate", "hidden", "seed", "objective"});
    s->read("epochs", t.epochs);
    s->read("batch_size", t.batch_size);
    s->read("learning_rate", t.learning_rate);
    s->read("hidden", t.hidden);
    s->read("seed", t.seed);
    std::string objective(train::to_string(t.objective));
    s->read("objective", objective);
    t.objective = train::parse_objective(objective);
  }

  if (auto s = root.child("eval")) {
    s->allow({"option", "text_steps", "text_learning_rate", "text_tau"});
    std::string option(train::to_string(cfg.eval_option));
    s->read("option", option);
    cfg.eval_option = train::parse_eval_option(option);
    s->read("text_steps", cfg.text.steps);
    s->read("text_learning_rate", cfg.text.learning_rate);
    s->read("text_tau", cfg.text.tau);
  }

  if (auto s = root.child("ablation")) {
    s->allow({"seeds"});
    if (const json* v = s->find("seeds")) {
      if (!v->is_array()) throw s->type_error("seeds", "an array of non-negative integers");
      cfg.ablation_seeds.clear();
      for (const auto& item : *v) {
        if (!item.is_number_unsigned()) {
          throw s->type_error("seeds", "an array of non-negative integers");
        }
        cfg.ablation_seeds.push_back(item.get<std::uint64_t>());
      }
    }
  }

  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::string run_config_json(const RunConfig& cfg) {
  const auto& w = cfg.world;
  const auto& m = w.motion;
  const auto& e = w.emitter;
  const auto& l = cfg.train.loss;
  const auto& t = cfg.train;
  json doc;
  doc["seed"] = cfg.seed;
  doc["threads"] = cfg.threads;
  doc["paths"] = {{"input", cfg.paths.input}, {"out", cfg.paths.out},
                  {"encoder", cfg.paths.encoder}};
  doc["world"] = {{"n_train_classes", w.n_train_classes},
                  {"n_test_classes", w.n_test_classes},
                  {"dim", w.dim},
                  {"train_per_class", w.train_per_class},
                  {"calibration_per_class", w.calibration_per_class},
                  {"test_per_class", w.test_per_class},
                  {"pool_per_class", w.pool_per_class},
                  {"sigma_img", w.sigma_img},
                  {"image_subspace_dim", w.image_subspace_dim},
                  {"image_size", w.image_size},
                  {"feature_size", w.feature_size},
                  {"texture_gain", w.texture_gain},
                  {"texture_period", w.texture_period}};
  doc["motion"] = {
      {"kind", m.forced_kind ? std::string(motion::to_string(*m.forced_kind)) : "random"},
      {"dx", range_json(m.dx)},
      {"dy", range_json(m.dy)},
      {"scale_end", range_json(m.scale_end)},
      {"angle_end", range_json(m.angle_end)},
      {"duration", m.duration},
      {"n_frames", m.n_frames}};
  doc["emitter"] = {{"theta_pos", e.theta_pos},
                    {"theta_neg", e.theta_neg},
                    {"log_eps", e.log_eps},
                    {"refractory", e.refractory},
                    {"threshold_noise_sigma", e.threshold_noise_sigma}};
  doc["loss"] = {{"tau", l.tau},
                 {"gaussian_mu", l.gaussian_mu},
                 {"gaussian_sigma", l.gaussian_sigma},
                 {"gaussian_shape", shape_name(l.gaussian_shape)},
                 {"knn_k", l.knn_k}};
  doc["train"] = {{"epochs", t.epochs},
                  {"batch_size", t.batch_size},
                  {"learning_rate", t.learning_rate},
                  {"hidden", t.hidden},
                  {"seed", t.seed},
                  {"objective", train::to_string(t.objective)}};
  doc["eval"] = {{"option", train::to_string(cfg.eval_option)},
                 {"text_steps", cfg.text.steps},
                 {"text_learning_rate", cfg.text.learning_rate},
                 {"text_tau", cfg.text.tau}};
  doc["ablation"] = {{"seeds", cfg.ablation_seeds}};
  return doc.dump(2) + "\n";
}

}  // namespace evalign::cli
