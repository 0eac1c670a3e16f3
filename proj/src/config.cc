#include "partatlas/config.h"

#include <cstdio>

#include "partatlas/error.h"

namespace partatlas {

namespace {

// Overlays `given` on `defaults`, rejecting keys the defaults do not have.
Json merged(const Json& defaults, const Json& given, std::string_view where) {
  if (given.is_null()) return defaults;
  if (!given.is_object()) {
    throw ConfigError(std::string(where) + ": expected an object");
  }
  Json out = defaults;
  for (const auto& [key, value] : given.items()) {
    if (!defaults.contains(key)) {
      throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
    }
    out[key] = value;
  }
  return out;
}

template <typename T>
T get(const Json& j, const char* key, std::string_view where) {
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string(where) + ": bad value for '" + key + "': " +
                      j.at(key).dump());
  }
}

}  // namespace

Json to_json(const OverlapConfig& c) {
  return {{"mode", c.mode == OverlapMode::kHard ? "hard" : "soft"},
          {"alpha", c.alpha ? Json(*c.alpha) : Json(nullptr)},
          {"quadrature_nodes", c.quadrature_nodes},
          {"support_pad", c.support_pad}};
}

OverlapConfig overlap_config_from_json(const Json& given) {
  const char* where = "overlap";
  const Json j = merged(to_json(OverlapConfig{}), given, where);
  OverlapConfig c;
  const auto mode = get<std::string>(j, "mode", where);
  if (mode == "hard") {
    c.mode = OverlapMode::kHard;
  } else if (mode == "soft") {
    c.mode = OverlapMode::kSoft;
  } else {
    throw ConfigError("overlap: mode must be 'hard' or 'soft'");
  }
  if (!j.at("alpha").is_null()) c.alpha = get<double>(j, "alpha", where);
  c.quadrature_nodes = get<int>(j, "quadrature_nodes", where);
  c.support_pad = get<double>(j, "support_pad", where);
  c.validate();
  return c;
}

Json to_json(const MilConfig& c) {
  return {{"variant", std::string(to_string(c.variant))},
          {"lambda", c.lambda},
          {"appearance_rounds", c.schedule.appearance_rounds},
          {"joint_rounds", c.schedule.joint_rounds},
          {"epochs", c.solver.epochs},
          {"learning_rate", c.solver.learning_rate},
          {"seed", c.solver.seed}};
}

MilConfig mil_config_from_json(const Json& given) {
  const char* where = "mil";
  const Json j = merged(to_json(MilConfig{}), given, where);
  MilConfig c;
  c.variant = parse_variant(get<std::string>(j, "variant", where));
  c.lambda = get<double>(j, "lambda", where);
  c.schedule.appearance_rounds = get<int>(j, "appearance_rounds", where);
  c.schedule.joint_rounds = get<int>(j, "joint_rounds", where);
  c.solver.epochs = get<int>(j, "epochs", where);
  c.solver.learning_rate = get<double>(j, "learning_rate", where);
  c.solver.seed = get<uint64_t>(j, "seed", where);
  c.validate();
  return c;
}

AnchorHyperparams anchor_config_from_json(const Json& given) {
  const char* where = "anchors";
  const Json j = merged(to_json(AnchorHyperparams{}), given, where);
  AnchorHyperparams h;
  h.num_anchors = get<int>(j, "num_anchors", where);
  h.lambda = get<double>(j, "lambda", where);
  h.gamma = get<double>(j, "gamma", where);
  h.learning_rate = get<double>(j, "learning_rate", where);
  h.momentum = get<double>(j, "momentum", where);
  h.iterations = get<int>(j, "iterations", where);
  h.log_interval = get<int>(j, "log_interval", where);
  h.seed = get<uint64_t>(j, "seed", where);
  h.validate();
  return h;
}

Json to_json(const SyntheticProfile& p) {
  Json parts = Json::array();
  for (const auto& part : p.parts) {
    parts.push_back({{"name", part.name}, {"box", region_to_json(part.box)}});
  }
  Json amb = nullptr;
  if (p.ambiguity) {
    amb = {{"part", p.ambiguity->part},
           {"inner", region_to_json(p.ambiguity->inner)},
           {"salience_spread", p.ambiguity->salience_spread},
           {"annotate_outer", p.ambiguity->annotate_outer},
           {"negative_rate", p.ambiguity->negative_rate}};
  }
  return {{"num_images", p.num_images},
          {"image_size", p.image_size},
          {"parts", parts},
          {"negative_fraction", p.negative_fraction},
          {"outlier_fraction", p.outlier_fraction},
          {"zoom_fraction", p.zoom_fraction},
          {"scale_jitter", p.scale_jitter},
          {"max_object_scale", p.max_object_scale},
          {"noise", p.noise},
          {"background", p.background},
          {"distractors", p.distractors},
          {"descriptor_dim", p.descriptor_dim},
          {"clutter_patterns", p.clutter_patterns},
          {"confuser_rate", p.confuser_rate},
          {"negative_confuser_rate", p.negative_confuser_rate},
          {"congruent_pairs", p.congruent_pairs},
          {"ambiguity", amb},
          {"seed", p.seed}};
}

SyntheticProfile synthetic_profile_from_json(const Json& given) {
  const char* where = "synth";
  const Json j = merged(to_json(SyntheticProfile{}), given, where);
  SyntheticProfile p;
  p.num_images = get<int>(j, "num_images", where);
  p.image_size = get<double>(j, "image_size", where);
  p.parts.clear();
  try {
    for (const auto& part : j.at("parts")) {
      p.parts.push_back({part.at("name").get<std::string>(),
                         region_from_json(part.at("box"))});
    }
  } catch (const std::exception& e) {
    throw ConfigError(std::string("synth: bad parts list: ") + e.what());
  }
  p.negative_fraction = get<double>(j, "negative_fraction", where);
  p.outlier_fraction = get<double>(j, "outlier_fraction", where);
  p.zoom_fraction = get<double>(j, "zoom_fraction", where);
  p.scale_jitter = get<double>(j, "scale_jitter", where);
  p.max_object_scale = get<double>(j, "max_object_scale", where);
  p.noise = get<double>(j, "noise", where);
  p.background = get<double>(j, "background", where);
  p.distractors = get<int>(j, "distractors", where);
  p.descriptor_dim = get<int>(j, "descriptor_dim", where);
  p.clutter_patterns = get<int>(j, "clutter_patterns", where);
  p.confuser_rate = get<double>(j, "confuser_rate", where);
  p.negative_confuser_rate = get<double>(j, "negative_confuser_rate", where);
  p.congruent_pairs = get<bool>(j, "congruent_pairs", where);
  p.seed = get<uint64_t>(j, "seed", where);
  if (!j.at("ambiguity").is_null()) {
    const char* aw = "synth.ambiguity";
    const AmbiguousExtent d;
    const Json a = merged({{"part", ""},
                           {"inner", region_to_json(d.inner)},
                           {"salience_spread", d.salience_spread},
                           {"annotate_outer", d.annotate_outer},
                           {"negative_rate", d.negative_rate}},
                          j.at("ambiguity"), aw);
    AmbiguousExtent amb;
    amb.part = get<std::string>(a, "part", aw);
    try {
      amb.inner = region_from_json(a.at("inner"));
    } catch (const std::exception& e) {
      throw ConfigError(std::string(aw) + ": " + e.what());
    }
    amb.salience_spread = get<double>(a, "salience_spread", aw);
    amb.annotate_outer = get<bool>(a, "annotate_outer", aw);
    amb.negative_rate = get<double>(a, "negative_rate", aw);
    p.ambiguity = amb;
  }
  p.validate();
  return p;
}

Json config_section(const Json& config, std::string_view name) {
  if (config.is_null()) return Json::object();
  if (!config.is_object()) throw ConfigError("config must be a JSON object");
  auto it = config.find(std::string(name));
  return it == config.end() ? Json::object() : *it;
}

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const Json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(config.dump())));
  return buf;
}

Json run_block(std::string_view verb, uint64_t seed, const Json& config,
               std::string_view command, int threads) {
  return {{"tool", "partatlas"},
          {"verb", std::string(verb)},
          {"version", std::string(kToolVersion)},
          {"seed", seed},
          {"config", config},
          {"config_hash", config_hash(config)},
          {"command", std::string(command)},
          {"threads", threads}};
}

}  // namespace partatlas
