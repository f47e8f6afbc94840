#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "icsc/geometry.hpp"
#include "icsc/render.hpp"

namespace icsc {

/// Throws UsageError naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                         const std::string& where);

// Scene and sampling parameters. The *_from_json readers start from defaults,
// overwrite only the keys present, reject unknown keys and validate.

nlohmann::json to_json(const CylinderModel& c);
CylinderModel cylinder_from_json(const nlohmann::json& j);

nlohmann::json to_json(const CameraIntrinsics& c);
CameraIntrinsics intrinsics_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SceneGeometry& g);
SceneGeometry scene_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RandomizationBounds& b);
RandomizationBounds bounds_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RandomizationSpec& s);
RandomizationSpec spec_from_json(const nlohmann::json& j);

}  // namespace icsc
