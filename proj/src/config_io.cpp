#include "dygs/config_io.hpp"

#include "dygs/image_io.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace dygs {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RefineSettings, lambda_depth, lr_position, lr_log_scale, lr_rotation,
                                                lr_color, lr_opacity)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ParameterizerDefaults, opacity, scale_factor)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, joint_iterations, retro_count, retro_window,
                                                segment_length, expansion_delta, lambda_g_depth, lambda_jl_depth,
                                                lambda_jl_reg, lambda_rl_depth, lr_deformation, lr_rotation,
                                                lr_translation, length_unit, basis_count, active_half_width, velocity_window,
                                                stride, refine_iterations, refine, parameterizer, seed,
                                                joint_learning, retrospective, partial_activation,
                                                refresh_expansion_mask)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SynthConfig, width, height, fx, fy, cx, cy, near, gaussian_count,
                                                extent_x, extent_y, height_amplitude, height_frequency,
                                                texture_frequency, opacity, breathing_amplitude, breathing_frequency,
                                                breathing_phase, breathing_radius, arc_radius, arc_span, target_x,
                                                target_y, target_z, frame_count, fps, depth_noise, color_noise, seed)

namespace {

void reject_unknown(const nlohmann::json& given, const nlohmann::json& known, const std::string& path) {
  if (!given.is_object()) throw IoError("config" + path + " must be a JSON object");
  for (auto it = given.begin(); it != given.end(); ++it) {
    if (!known.contains(it.key())) throw IoError("unknown config key '" + path + it.key() + "'");
    if (known[it.key()].is_object()) reject_unknown(it.value(), known[it.key()], path + it.key() + ".");
  }
}

template <typename T>
T parse(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, nlohmann::json(T{}), "");
  try {
    T out = j.get<T>();
    out.validate();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("invalid config value: ") + e.what());
  }
}

}  // namespace

std::string train_config_to_json(const TrainConfig& config) { return nlohmann::json(config).dump(2); }
TrainConfig train_config_from_json(const std::string& text) { return parse<TrainConfig>(text); }
std::string synth_config_to_json(const SynthConfig& config) { return nlohmann::json(config).dump(2); }
SynthConfig synth_config_from_json(const std::string& text) { return parse<SynthConfig>(text); }

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace dygs
