#pragma once

#include "mcpep/kinematics.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace mcpep {

/// Chain description file (JSON). Top-level keys:
///   "gravity": [gx, gy, gz]                       (optional, default 0,0,-9.81)
///   "sensor_offset": {"xyz": [..], "rpy": [..]}   (optional)
///   "joints": [ {
///       "name": str (optional),
///       "axis": [x, y, z],
///       "xyz": [x, y, z], "rpy": [r, p, y],        parent -> joint transform
///       "limits": [lower, upper]                   (optional, rad)
///       "mass": kg, "com": [x, y, z],
///       "inertia": {"ixx", "iyy", "izz", "ixy", "ixz", "iyz"},
///       "capsule": {"a": [..], "b": [..], "radius": r}   (optional)
///   } ... ]
/// Unknown keys are rejected with a FormatError.
ChainModel parse_chain(std::string_view json_text);
ChainModel load_chain(const std::filesystem::path& path);
std::string chain_to_json(const ChainModel& chain);

/// Built-in 7-joint arm with Panda-like kinematics, joint limits and masses;
/// links carry capsule geometry for synthetic surface meshes.
ChainModel seven_dof_arm();

/// 7-joint arm whose joint centres all lie on the link centrelines. Roll joints
/// are coaxial with their capsules, which makes many contacts near-singular.
ChainModel coaxial_arm();

}  // namespace mcpep
