#pragma once

#include "dygs/frame.hpp"

#include <string>

namespace dygs {

inline constexpr double kDefaultDepthScale = 1000.0;

/// Loads a JSON manifest:
///   { "intrinsics": {"fx", "fy", "cx", "cy", "width", "height"[, "near"]},
///     "depth_scale": 1000, "t_max": 1.0,
///     "frames": [ {"timestamp", "rgb", "depth"[, "mask"][, "pose"]} ] }
/// Image paths are relative to the manifest's directory. "pose" holds 16
/// numbers, a row-major camera-to-world matrix. A downsample factor f > 1
/// box-filters the images and rescales the intrinsics.
Dataset load_sequence(const std::string& manifest_path, int downsample = 1);

/// Writes `dataset` as rgb/, depth/, mask/ PNG folders plus manifest.json.
void write_dataset(const Dataset& dataset, const std::string& directory, double depth_scale = kDefaultDepthScale);

/// Box-filter downsampling by an integer factor (exposed for testing).
FrameObservation downsample_frame(const FrameObservation& frame, int factor);
CameraIntrinsics scale_intrinsics(const CameraIntrinsics& k, int factor);

}  // namespace dygs
