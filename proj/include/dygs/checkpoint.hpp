#pragma once

#include "dygs/trainer.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dygs {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// Everything needed to render, evaluate or resume a reconstruction.
struct Checkpoint {
  TrainConfig config;
  CameraIntrinsics intrinsics;
  ReconstructionState state;
};

/// Little-endian binary container: "DYGS", u32 version, config JSON,
/// intrinsics, segments (cloud, deformation, optimizer moments), trajectory,
/// update counter and rng state.
std::string serialize_checkpoint(const TrainConfig& config, const CameraIntrinsics& intrinsics,
                                 const ReconstructionState& state);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const TrainConfig& config, const CameraIntrinsics& intrinsics,
                     const ReconstructionState& state);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dygs
