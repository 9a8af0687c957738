#pragma once

#include <nlohmann/json.hpp>

#include "koop/sampling.hpp"

namespace koop {

nlohmann::json scaling_to_json(const ScalingSpec& s);
ScalingSpec scaling_from_json(const nlohmann::json& j);

}  // namespace koop
