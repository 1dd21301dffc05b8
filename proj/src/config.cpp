#include "depthforge/config.hpp"

#include "depthforge/pfm.hpp"

#include "json.hpp"

#include <set>

namespace depthforge {

using nlohmann::json;

namespace {

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

// Reads known keys from one object and rejects anything else.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError("config section '" + path_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + path_ + "." + key + "': " + e.what());
    }
  }

  void get(const char* key, Range& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    const json& v = obj_.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      throw ConfigError("config key '" + path_ + "." + key + "' must be [lo, hi]");
    }
    out = {v[0].get<double>(), v[1].get<double>()};
  }

  std::optional<Section> child(const char* key) {
    seen_.insert(key);
    if (!obj_.contains(key)) return std::nullopt;
    return Section(obj_.at(key), path_.empty() ? key : path_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, _] : obj_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + (path_.empty() ? k : path_ + "." + k) + "'");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

AlignMode align_mode_from_string(const std::string& s) {
  if (s == "least_squares") return AlignMode::LeastSquares;
  if (s == "median_mad") return AlignMode::MedianMad;
  throw ConfigError("unknown align_mode '" + s + "'");
}

std::string to_string(AlignMode m) { return m == AlignMode::LeastSquares ? "least_squares" : "median_mad"; }

}  // namespace

void Config::validate() const {
  scene.validate();
  data.validate();
  run.validate();
  if (scene.height % run.model.patch != 0 || scene.width % run.model.patch != 0) {
    throw ConfigError("scene size must be divisible by the model patch size");
  }
}

std::string serialize_config(const Config& c) {
  const auto& s = c.scene;
  const auto& d = c.data;
  const auto& r = c.run;
  const auto& p = c.run.perturb;
  const auto& a = c.ablation;
  json j;
  j["scene"] = {{"height", s.height},       {"width", s.width},   {"primitives", s.primitives},
                {"t_min", s.t_min},         {"t_max", s.t_max},   {"horizon", s.horizon},
                {"texture_noise", s.texture_noise}, {"domain", s.domain}};
  j["data"] = {{"labeled", d.labeled},
               {"unlabeled", d.unlabeled},
               {"test", d.test},
               {"train_domain", d.train_domain},
               {"unlabeled_domains", d.unlabeled_domains},
               {"test_domains", d.test_domains}};
  j["run"] = {{"seed", r.seed},
              {"teacher_epochs", r.teacher_epochs},
              {"unlabeled_sweeps", r.unlabeled_sweeps},
              {"ratio_labeled", r.ratio_labeled},
              {"ratio_unlabeled", r.ratio_unlabeled},
              {"teacher_batch", r.teacher_batch},
              {"batch_groups", r.batch_groups},
              {"encoder_lr", r.encoder_lr},
              {"decoder_lr_multiplier", r.decoder_lr_multiplier},
              {"adamw",
               {{"beta1", r.adamw.beta1},
                {"beta2", r.adamw.beta2},
                {"eps", r.adamw.eps},
                {"weight_decay", r.adamw.weight_decay}}},
              {"model", {{"patch", r.model.patch}, {"channels", r.model.channels}}},
              {"frozen_seed", r.frozen_seed},
              {"alpha", r.alpha},
              {"enable_unlabeled", r.enable_unlabeled},
              {"enable_strong_perturb", r.enable_strong_perturb},
              {"enable_feat_align", r.enable_feat_align},
              {"feat_target", to_string(r.feat_target)},
              {"frozen_input", to_string(r.frozen_input)},
              {"align_mode", to_string(r.align_mode)}};
  j["perturb"] = {{"brightness", range_json(p.brightness)},
                  {"contrast", range_json(p.contrast)},
                  {"saturation", range_json(p.saturation)},
                  {"hue", range_json(p.hue)},
                  {"blur_sigma", range_json(p.blur_sigma)},
                  {"cutmix_probability", p.cutmix_probability},
                  {"cutmix_area", range_json(p.cutmix_area)},
                  {"cutmix_aspect", range_json(p.cutmix_aspect)},
                  {"seed", p.seed}};
  j["ablation"] = {{"seeds", a.seeds},
                   {"core", a.core},
                   {"margins", a.margins},
                   {"feat_targets", a.feat_targets},
                   {"alphas", a.alphas}};
  return j.dump(2) + "\n";
}

Config parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Config c;
  Section root(j, "");
  if (auto s = root.child("scene")) {
    s->get("height", c.scene.height);
    s->get("width", c.scene.width);
    s->get("primitives", c.scene.primitives);
    s->get("t_min", c.scene.t_min);
    s->get("t_max", c.scene.t_max);
    s->get("horizon", c.scene.horizon);
    s->get("texture_noise", c.scene.texture_noise);
    s->get("domain", c.scene.domain);
    s->finish();
  }
  if (auto s = root.child("data")) {
    s->get("labeled", c.data.labeled);
    s->get("unlabeled", c.data.unlabeled);
    s->get("test", c.data.test);
    s->get("train_domain", c.data.train_domain);
    s->get("unlabeled_domains", c.data.unlabeled_domains);
    s->get("test_domains", c.data.test_domains);
    s->finish();
  }
  if (auto s = root.child("run")) {
    auto& r = c.run;
    s->get("seed", r.seed);
    s->get("teacher_epochs", r.teacher_epochs);
    s->get("unlabeled_sweeps", r.unlabeled_sweeps);
    s->get("ratio_labeled", r.ratio_labeled);
    s->get("ratio_unlabeled", r.ratio_unlabeled);
    s->get("teacher_batch", r.teacher_batch);
    s->get("batch_groups", r.batch_groups);
    s->get("encoder_lr", r.encoder_lr);
    s->get("decoder_lr_multiplier", r.decoder_lr_multiplier);
    if (auto o = s->child("adamw")) {
      o->get("beta1", r.adamw.beta1);
      o->get("beta2", r.adamw.beta2);
      o->get("eps", r.adamw.eps);
      o->get("weight_decay", r.adamw.weight_decay);
      o->finish();
    }
    if (auto o = s->child("model")) {
      o->get("patch", r.model.patch);
      o->get("channels", r.model.channels);
      o->finish();
    }
    s->get("frozen_seed", r.frozen_seed);
    s->get("alpha", r.alpha);
    s->get("enable_unlabeled", r.enable_unlabeled);
    s->get("enable_strong_perturb", r.enable_strong_perturb);
    s->get("enable_feat_align", r.enable_feat_align);
    std::string target = to_string(r.feat_target);
    std::string frozen = to_string(r.frozen_input);
    std::string mode = to_string(r.align_mode);
    s->get("feat_target", target);
    s->get("frozen_input", frozen);
    s->get("align_mode", mode);
    try {
      r.feat_target = feat_target_from_string(target);
      r.frozen_input = frozen_input_from_string(frozen);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    r.align_mode = align_mode_from_string(mode);
    s->finish();
  }
  if (auto s = root.child("perturb")) {
    auto& p = c.run.perturb;
    s->get("brightness", p.brightness);
    s->get("contrast", p.contrast);
    s->get("saturation", p.saturation);
    s->get("hue", p.hue);
    s->get("blur_sigma", p.blur_sigma);
    s->get("cutmix_probability", p.cutmix_probability);
    s->get("cutmix_area", p.cutmix_area);
    s->get("cutmix_aspect", p.cutmix_aspect);
    s->get("seed", p.seed);
    s->finish();
  }
  if (auto s = root.child("ablation")) {
    s->get("seeds", c.ablation.seeds);
    s->get("core", c.ablation.core);
    s->get("margins", c.ablation.margins);
    s->get("feat_targets", c.ablation.feat_targets);
    s->get("alphas", c.ablation.alphas);
    s->finish();
  }
  root.finish();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  try {
    return parse_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace depthforge
