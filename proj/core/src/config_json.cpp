#include "config_json.hpp"

#include <set>
#include <string>

#include "jcapa/error.hpp"

namespace jcapa::detail {

void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  std::set<std::string> known(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

namespace {

template <typename T>
void read_field(const Json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace

Json to_json(const NetworkConfig& c) {
  Json j;
  j["in_channels"] = c.in_channels;
  j["num_classes"] = c.num_classes;
  j["base_channels"] = c.base_channels;
  j["image_size"] = c.image_size;
  j["transformer"] = {{"embed_dim", c.transformer.embed_dim},
                      {"heads", c.transformer.heads},
                      {"mlp_ratio", c.transformer.mlp_ratio},
                      {"layers", c.transformer.layers}};
  j["scales"] = c.scales;
  return j;
}

NetworkConfig network_config_from_json(const Json& j, const std::string& where) {
  reject_unknown_keys(j,
                      {"in_channels", "num_classes", "base_channels", "image_size", "transformer",
                       "scales"},
                      where);
  NetworkConfig c;
  read_field(j, "in_channels", c.in_channels, where);
  read_field(j, "num_classes", c.num_classes, where);
  read_field(j, "base_channels", c.base_channels, where);
  read_field(j, "image_size", c.image_size, where);
  read_field(j, "scales", c.scales, where);
  // embed_dim follows base_channels unless given explicitly.
  c.transformer.embed_dim = 4 * c.base_channels;
  if (auto it = j.find("transformer"); it != j.end()) {
    const std::string sub = where + ".transformer";
    reject_unknown_keys(*it, {"embed_dim", "heads", "mlp_ratio", "layers"}, sub);
    read_field(*it, "embed_dim", c.transformer.embed_dim, sub);
    read_field(*it, "heads", c.transformer.heads, sub);
    read_field(*it, "mlp_ratio", c.transformer.mlp_ratio, sub);
    read_field(*it, "layers", c.transformer.layers, sub);
  }
  c.validate();
  return c;
}

Json to_json(const AugConfig& c) {
  Json j;
  j["cutmix_fraction"] = c.cutmix_fraction;
  j["area_min"] = c.area_min;
  j["area_max"] = c.area_max;
  j["rng_seed"] = c.rng_seed;
  return j;
}

AugConfig aug_config_from_json(const Json& j, const std::string& where) {
  reject_unknown_keys(j, {"cutmix_fraction", "area_min", "area_max", "rng_seed"}, where);
  AugConfig c;
  read_field(j, "cutmix_fraction", c.cutmix_fraction, where);
  read_field(j, "area_min", c.area_min, where);
  read_field(j, "area_max", c.area_max, where);
  read_field(j, "rng_seed", c.rng_seed, where);
  c.validate();
  return c;
}

}  // namespace jcapa::detail
