#include "dygs/trajectory_io.hpp"

#include "dygs/image_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace dygs {

std::string format_trajectory(const Trajectory& trajectory) {
  std::string out;
  char line[256];
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const Se3Pose c2w = trajectory.poses[i].inverse();
    const Quat q = matrix_to_quat(c2w.rotation);
    const Vec3& t = c2w.translation;
    // Avoid printing "-0".
    auto z = [](double v) { return v == 0.0 ? 0.0 : v; };
    std::snprintf(line, sizeof(line), "%.9f %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", trajectory.timestamps[i], z(t.x()),
                  z(t.y()), z(t.z()), z(q[1]), z(q[2]), z(q[3]), z(q[0]));
    out += line;
  }
  return out;
}

void write_trajectory(const Trajectory& trajectory, const std::string& path) {
  if (trajectory.timestamps.size() != trajectory.poses.size())
    throw IoError("trajectory timestamps and poses differ in length");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write trajectory '" + path + "'");
  out << format_trajectory(trajectory);
  if (!out) throw IoError("failed writing trajectory '" + path + "'");
}

Trajectory read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory '" + path + "'");
  Trajectory traj;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
      throw IoError(path + ":" + std::to_string(number) + ": expected 8 numbers");
    Se3Pose c2w;
    c2w.rotation = quat_to_matrix(normalize_quat(Quat(qw, qx, qy, qz)));
    c2w.translation = Vec3(tx, ty, tz);
    traj.timestamps.push_back(t);
    traj.poses.push_back(c2w.inverse());
  }
  return traj;
}

}  // namespace dygs
