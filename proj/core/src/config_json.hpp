#pragma once

#include <json.hpp>

#include "jcapa/augment.hpp"
#include "jcapa/network.hpp"

namespace jcapa::detail {

using Json = nlohmann::ordered_json;

Json to_json(const NetworkConfig& c);
// Unknown keys raise ConfigError naming `where`.
NetworkConfig network_config_from_json(const Json& j, const std::string& where = "model");

Json to_json(const AugConfig& c);
AugConfig aug_config_from_json(const Json& j, const std::string& where = "aug");

void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed,
                         const std::string& where);

}  // namespace jcapa::detail
