#include "dygs/dataset.hpp"

#include "dygs/image_io.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace dygs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string frame_label(std::size_t i) { return "frame " + std::to_string(i); }

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw IoError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw IoError(where + ": field '" + key + "' has the wrong type");
  }
}

std::string resolve(const fs::path& base, const std::string& rel, const std::string& where) {
  const fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : base / rel;
  if (!fs::exists(p)) throw IoError(where + ": file not found '" + p.string() + "'");
  return p.string();
}

}  // namespace

CameraIntrinsics scale_intrinsics(const CameraIntrinsics& k, int f) {
  if (f < 1) throw std::invalid_argument("downsample factor must be >= 1");
  CameraIntrinsics out = k;
  const double shift = 0.5 * (f - 1);
  out.fx = k.fx / f;
  out.fy = k.fy / f;
  out.cx = (k.cx - shift) / f;
  out.cy = (k.cy - shift) / f;
  out.width = k.width / f;
  out.height = k.height / f;
  return out;
}

FrameObservation downsample_frame(const FrameObservation& frame, int f) {
  if (f == 1) return frame;
  FrameObservation out;
  out.timestamp = frame.timestamp;
  out.intrinsics = scale_intrinsics(frame.intrinsics, f);
  const int w = frame.rgb.width / f, h = frame.rgb.height / f;
  out.rgb = Image(w, h, 3);
  out.depth = Image(w, h, 1);
  out.instrument_mask = Mask(w, h, false);
  const double inv = 1.0 / (f * f);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double rgb[3] = {0.0, 0.0, 0.0};
      double depth_sum = 0.0;
      int depth_count = 0, mask_count = 0;
      for (int dy = 0; dy < f; ++dy) {
        for (int dx = 0; dx < f; ++dx) {
          const int sx = x * f + dx, sy = y * f + dy;
          for (int c = 0; c < 3; ++c) rgb[c] += frame.rgb.at(sx, sy, c);
          if (frame.depth_valid(sx, sy)) {
            depth_sum += frame.depth.at(sx, sy);
            ++depth_count;
          }
          mask_count += frame.instrument_mask.at(sx, sy);
        }
      }
      for (int c = 0; c < 3; ++c) out.rgb.at(x, y, c) = rgb[c] * inv;
      out.depth.at(x, y) = depth_count > 0 ? depth_sum / depth_count : 0.0;
      out.instrument_mask.set(x, y, 2 * mask_count >= f * f);
    }
  }
  return out;
}

Dataset load_sequence(const std::string& manifest_path, int downsample) {
  if (downsample < 1) throw IoError("downsample factor must be >= 1");
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest '" + manifest_path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw IoError("manifest '" + manifest_path + "' is not valid JSON: " + e.what());
  }
  const fs::path base = fs::path(manifest_path).parent_path();

  const json intr = doc.contains("intrinsics") ? doc["intrinsics"] : json();
  if (!intr.is_object()) throw IoError("manifest: missing 'intrinsics' object");
  CameraIntrinsics k;
  k.fx = required<double>(intr, "fx", "intrinsics");
  k.fy = required<double>(intr, "fy", "intrinsics");
  k.cx = required<double>(intr, "cx", "intrinsics");
  k.cy = required<double>(intr, "cy", "intrinsics");
  k.width = required<int>(intr, "width", "intrinsics");
  k.height = required<int>(intr, "height", "intrinsics");
  if (intr.contains("near")) k.near = intr["near"].get<double>();
  try {
    k.validate();
  } catch (const std::exception& e) {
    throw IoError(std::string("manifest intrinsics: ") + e.what());
  }

  const double depth_scale = doc.value("depth_scale", kDefaultDepthScale);
  if (!(depth_scale > 0.0)) throw IoError("manifest: depth_scale must be positive");
  if (!doc.contains("frames") || !doc["frames"].is_array() || doc["frames"].empty())
    throw IoError("manifest '" + manifest_path + "': dataset has no frames");

  Dataset ds;
  ds.intrinsics = scale_intrinsics(k, downsample);
  const json& frames = doc["frames"];
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string where = frame_label(i);
    const json& fr = frames[i];
    FrameObservation frame;
    frame.timestamp = required<double>(fr, "timestamp", where);
    if (i > 0 && !(frame.timestamp > ds.frames.back().timestamp))
      throw IoError(where + ": timestamps must be strictly increasing");
    frame.intrinsics = k;
    frame.rgb = read_png_rgb(resolve(base, required<std::string>(fr, "rgb", where), where));
    frame.depth = read_png_depth(resolve(base, required<std::string>(fr, "depth", where), where), depth_scale);
    if (fr.contains("mask"))
      frame.instrument_mask = read_png_mask(resolve(base, fr["mask"].get<std::string>(), where));
    else
      frame.instrument_mask = Mask(k.width, k.height, true);
    if (frame.rgb.width != k.width || frame.rgb.height != k.height)
      throw IoError(where + ": rgb size " + std::to_string(frame.rgb.width) + "x" + std::to_string(frame.rgb.height) +
                    " does not match intrinsics");
    if (!frame.depth.same_shape(Image(k.width, k.height, 1)))
      throw IoError(where + ": depth size does not match intrinsics");
    if (frame.instrument_mask.width != k.width || frame.instrument_mask.height != k.height)
      throw IoError(where + ": mask size does not match intrinsics");

    std::optional<Se3Pose> pose;
    if (fr.contains("pose")) {
      const auto values = required<std::vector<double>>(fr, "pose", where);
      if (values.size() != 16) throw IoError(where + ": pose must have 16 numbers");
      Mat4 m;
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) m(r, c) = values[static_cast<std::size_t>(r) * 4 + c];
      pose = Se3Pose::from_matrix(m).inverse();
    }
    ds.frames.push_back(downsample_frame(frame, downsample));
    ds.gt_poses.push_back(pose);
  }
  ds.t_max = doc.value("t_max", ds.frames.back().timestamp);
  return ds;
}

void write_dataset(const Dataset& dataset, const std::string& directory, double depth_scale) {
  const fs::path root(directory);
  for (const char* sub : {"rgb", "depth", "mask"}) fs::create_directories(root / sub);
  const CameraIntrinsics& k = dataset.intrinsics;
  json doc;
  doc["intrinsics"] = {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
                       {"width", k.width}, {"height", k.height}, {"near", k.near}};
  doc["depth_scale"] = depth_scale;
  doc["t_max"] = dataset.t_max;
  json frames = json::array();
  for (std::size_t i = 0; i < dataset.frames.size(); ++i) {
    const FrameObservation& f = dataset.frames[i];
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    const std::string rgb = std::string("rgb/") + name, depth = std::string("depth/") + name,
                      mask = std::string("mask/") + name;
    write_png_rgb((root / rgb).string(), f.rgb);
    write_png_depth((root / depth).string(), f.depth, depth_scale);
    write_png_mask((root / mask).string(), f.instrument_mask);
    json rec = {{"timestamp", f.timestamp}, {"rgb", rgb}, {"depth", depth}, {"mask", mask}};
    if (i < dataset.gt_poses.size() && dataset.gt_poses[i]) {
      const Mat4 m = dataset.gt_poses[i]->inverse().matrix();
      std::vector<double> values;
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) values.push_back(m(r, c));
      rec["pose"] = values;
    }
    frames.push_back(rec);
  }
  doc["frames"] = frames;
  std::ofstream out(root / "manifest.json");
  if (!out) throw IoError("cannot write manifest in '" + directory + "'");
  out << doc.dump(2) << '\n';
}

}  // namespace dygs
