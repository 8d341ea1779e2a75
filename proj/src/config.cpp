#include "handvote/config.hpp"

#include <algorithm>

#include "json.hpp"

#include "handvote/errors.hpp"
#include "handvote/eval.hpp"
#include "handvote/io.hpp"

namespace handvote {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw config_error(section + ": expected an object");
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* key) {
      return item.key() == key;
    });
    if (!known) throw config_error(section + ": unknown key '" + item.key() + "'");
  }
}

double get_number(const json& j, const char* key, double fallback, const std::string& section) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw config_error(section + "." + key + ": expected a number");
  return j[key].get<double>();
}

int get_int(const json& j, const char* key, int fallback, const std::string& section) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer()) throw config_error(section + "." + key + ": expected an integer");
  return j[key].get<int>();
}

bool get_bool(const json& j, const char* key, bool fallback, const std::string& section) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_boolean()) throw config_error(section + "." + key + ": expected a boolean");
  return j[key].get<bool>();
}

}  // namespace

RunConfig default_config() {
  RunConfig cfg;
  cfg.eval.thresholds = default_thresholds();
  return cfg;
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw config_error(origin + ": " + e.what());
  }
  RunConfig cfg = default_config();
  check_keys(j, origin, {"camera", "codec", "aggregator", "train", "synth", "eval"});

  if (j.contains("camera")) {
    const json& c = j["camera"];
    check_keys(c, "camera", {"fx", "fy", "cx", "cy", "width", "height"});
    cfg.camera.fx = get_number(c, "fx", cfg.camera.fx, "camera");
    cfg.camera.fy = get_number(c, "fy", cfg.camera.fy, "camera");
    cfg.camera.cx = get_number(c, "cx", cfg.camera.cx, "camera");
    cfg.camera.cy = get_number(c, "cy", cfg.camera.cy, "camera");
    cfg.camera.width = get_int(c, "width", cfg.camera.width, "camera");
    cfg.camera.height = get_int(c, "height", cfg.camera.height, "camera");
    try {
      validate(cfg.camera);
    } catch (const std::exception& e) {
      throw config_error(std::string("camera: ") + e.what());
    }
  }
  if (j.contains("codec")) {
    const json& c = j["codec"];
    check_keys(c, "codec", {"theta_mm", "tau_px"});
    cfg.codec.theta_mm = get_number(c, "theta_mm", cfg.codec.theta_mm, "codec");
    cfg.codec.tau_px = get_number(c, "tau_px", cfg.codec.tau_px, "codec");
    if (!(cfg.codec.theta_mm > 0.0) || !(cfg.codec.tau_px > 0.0)) {
      throw config_error("codec: theta_mm and tau_px must be positive");
    }
  }
  if (j.contains("aggregator")) {
    const json& a = j["aggregator"];
    check_keys(a, "aggregator", {"k", "sigma_mm", "max_iters", "stop_eps_mm", "weighting"});
    cfg.aggregator.k_candidates = get_int(a, "k", cfg.aggregator.k_candidates, "aggregator");
    cfg.aggregator.sigma = get_number(a, "sigma_mm", cfg.aggregator.sigma, "aggregator");
    cfg.aggregator.max_iters = get_int(a, "max_iters", cfg.aggregator.max_iters, "aggregator");
    cfg.aggregator.stop_eps = get_number(a, "stop_eps_mm", cfg.aggregator.stop_eps, "aggregator");
    if (a.contains("weighting")) {
      if (!a["weighting"].is_string()) throw config_error("aggregator.weighting: expected a string");
      cfg.aggregator.weighting = weighting_from_string(a["weighting"].get<std::string>());
    }
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    check_keys(t, "train",
               {"lr", "beta1", "beta2", "eps", "batch", "steps", "seed", "stacks", "channels",
                "augment", "loss_weight_r", "loss_weight_s", "loss_weight_v"});
    cfg.train.lr = get_number(t, "lr", cfg.train.lr, "train");
    cfg.train.beta1 = get_number(t, "beta1", cfg.train.beta1, "train");
    cfg.train.beta2 = get_number(t, "beta2", cfg.train.beta2, "train");
    cfg.train.eps = get_number(t, "eps", cfg.train.eps, "train");
    cfg.train.batch = get_int(t, "batch", cfg.train.batch, "train");
    cfg.train.steps = get_int(t, "steps", cfg.train.steps, "train");
    if (t.contains("seed")) {
      if (!t["seed"].is_number_integer()) throw config_error("train.seed: expected an integer");
      cfg.train.seed = t["seed"].get<std::uint64_t>();
    }
    cfg.train.stacks = get_int(t, "stacks", cfg.train.stacks, "train");
    cfg.train.channels = get_int(t, "channels", cfg.train.channels, "train");
    cfg.train.augment = get_bool(t, "augment", cfg.train.augment, "train");
    cfg.train.loss_weights.r = get_number(t, "loss_weight_r", cfg.train.loss_weights.r, "train");
    cfg.train.loss_weights.s = get_number(t, "loss_weight_s", cfg.train.loss_weights.s, "train");
    cfg.train.loss_weights.v = get_number(t, "loss_weight_v", cfg.train.loss_weights.v, "train");
  }
  if (j.contains("synth")) {
    const json& s = j["synth"];
    check_keys(s, "synth", {"model", "noise"});
    if (s.contains("model")) {
      if (!s["model"].is_string()) throw config_error("synth.model: expected a string");
      cfg.synth.model = s["model"].get<std::string>();
    }
    if (s.contains("noise")) {
      const json& n = s["noise"];
      check_keys(n, "synth.noise", {"depth_std_mm", "hole_prob", "s_std", "v_std", "seed"});
      cfg.synth.noise.depth_noise_std =
          get_number(n, "depth_std_mm", cfg.synth.noise.depth_noise_std, "synth.noise");
      cfg.synth.noise.hole_prob = get_number(n, "hole_prob", cfg.synth.noise.hole_prob, "synth.noise");
      cfg.synth.noise.target_noise_std_s =
          get_number(n, "s_std", cfg.synth.noise.target_noise_std_s, "synth.noise");
      cfg.synth.noise.target_noise_std_v =
          get_number(n, "v_std", cfg.synth.noise.target_noise_std_v, "synth.noise");
      if (n.contains("seed")) {
        if (!n["seed"].is_number_integer()) throw config_error("synth.noise.seed: expected an integer");
        cfg.synth.noise.seed = n["seed"].get<std::uint64_t>();
      }
      validate(cfg.synth.noise);
    }
  }
  if (j.contains("eval")) {
    const json& e = j["eval"];
    check_keys(e, "eval", {"thresholds"});
    if (e.contains("thresholds")) {
      if (!e["thresholds"].is_array()) throw config_error("eval.thresholds: expected an array");
      cfg.eval.thresholds.clear();
      for (const auto& v : e["thresholds"]) {
        if (!v.is_number()) throw config_error("eval.thresholds: expected numbers");
        cfg.eval.thresholds.push_back(v.get<double>());
      }
      if (!std::is_sorted(cfg.eval.thresholds.begin(), cfg.eval.thresholds.end())) {
        throw config_error("eval.thresholds: must be sorted ascending");
      }
    }
  }

  cfg.aggregator.theta = cfg.codec.theta_mm;
  cfg.aggregator.tau = cfg.codec.tau_px;
  cfg.train.theta = cfg.codec.theta_mm;
  cfg.train.tau = cfg.codec.tau_px;
  validate(cfg.aggregator);
  validate(cfg.train);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  return parse_config_text(read_text_file(path), path);
}

std::string config_to_json_text(const RunConfig& cfg) {
  json j;
  j["camera"] = {{"fx", cfg.camera.fx},       {"fy", cfg.camera.fy}, {"cx", cfg.camera.cx},
                 {"cy", cfg.camera.cy},       {"width", cfg.camera.width},
                 {"height", cfg.camera.height}};
  j["codec"] = {{"theta_mm", cfg.codec.theta_mm}, {"tau_px", cfg.codec.tau_px}};
  j["aggregator"] = {{"k", cfg.aggregator.k_candidates},
                     {"sigma_mm", cfg.aggregator.sigma},
                     {"max_iters", cfg.aggregator.max_iters},
                     {"stop_eps_mm", cfg.aggregator.stop_eps},
                     {"weighting", to_string(cfg.aggregator.weighting)}};
  j["train"] = {{"lr", cfg.train.lr},
                {"beta1", cfg.train.beta1},
                {"beta2", cfg.train.beta2},
                {"eps", cfg.train.eps},
                {"batch", cfg.train.batch},
                {"steps", cfg.train.steps},
                {"seed", cfg.train.seed},
                {"stacks", cfg.train.stacks},
                {"channels", cfg.train.channels},
                {"augment", cfg.train.augment},
                {"loss_weight_r", cfg.train.loss_weights.r},
                {"loss_weight_s", cfg.train.loss_weights.s},
                {"loss_weight_v", cfg.train.loss_weights.v}};
  j["synth"] = {{"model", cfg.synth.model},
                {"noise",
                 {{"depth_std_mm", cfg.synth.noise.depth_noise_std},
                  {"hole_prob", cfg.synth.noise.hole_prob},
                  {"s_std", cfg.synth.noise.target_noise_std_s},
                  {"v_std", cfg.synth.noise.target_noise_std_v},
                  {"seed", cfg.synth.noise.seed}}}};
  j["eval"] = {{"thresholds", cfg.eval.thresholds}};
  return j.dump(2) + "\n";
}

}  // namespace handvote
