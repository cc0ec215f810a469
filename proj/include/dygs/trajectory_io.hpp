#pragma once

#include "dygs/metrics.hpp"

#include <string>

namespace dygs {

/// TUM format: "timestamp tx ty tz qx qy qz qw" per line, camera-to-world.
std::string format_trajectory(const Trajectory& trajectory);
void write_trajectory(const Trajectory& trajectory, const std::string& path);
/// Parses TUM lines (comments starting with '#' are skipped) into world-to-camera poses.
Trajectory read_trajectory(const std::string& path);

}  // namespace dygs
