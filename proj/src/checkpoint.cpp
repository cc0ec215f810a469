#include "dygs/checkpoint.hpp"

#include "dygs/config_io.hpp"
#include "dygs/image_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dygs {

namespace {

constexpr char kMagic[4] = {'D', 'Y', 'G', 'S'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

class Writer {
 public:
  template <typename T>
  void scalar(T v) {
    v = to_little(v);
    const auto* p = reinterpret_cast<const char*>(&v);
    out_.append(p, sizeof(T));
  }
  void f64(double v) { scalar<double>(v); }
  void u32(std::uint32_t v) { scalar<std::uint32_t>(v); }
  void i32(std::int32_t v) { scalar<std::int32_t>(v); }
  void u64(std::uint64_t v) { scalar<std::uint64_t>(v); }
  void text(const std::string& s) {
    u64(s.size());
    out_ += s;
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  template <int N>
  void vec(const Eigen::Matrix<double, N, 1>& v) {
    for (int i = 0; i < N; ++i) f64(v[i]);
  }
  void pose(const Se3Pose& p) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) f64(p.rotation(r, c));
    vec<3>(p.translation);
  }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  template <typename T>
  T scalar() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(v);
  }
  double f64() { return scalar<double>(); }
  std::uint32_t u32() { return scalar<std::uint32_t>(); }
  std::int32_t i32() { return scalar<std::int32_t>(); }
  std::uint64_t u64() { return scalar<std::uint64_t>(); }
  std::size_t length(std::size_t element_size) {
    const std::uint64_t n = u64();
    if (n > (in_.size() - pos_) / element_size) throw CheckpointError("corrupt checkpoint: length exceeds file size");
    return static_cast<std::size_t>(n);
  }
  std::string text() {
    const std::size_t n = length(1);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> doubles() {
    std::vector<double> v(length(sizeof(double)));
    for (double& x : v) x = f64();
    return v;
  }
  template <int N>
  Eigen::Matrix<double, N, 1> vec() {
    Eigen::Matrix<double, N, 1> v;
    for (int i = 0; i < N; ++i) v[i] = f64();
    return v;
  }
  Se3Pose pose() {
    Se3Pose p;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) p.rotation(r, c) = f64();
    p.translation = vec<3>();
    return p;
  }
  void expect_end() const {
    if (pos_ != in_.size()) throw CheckpointError("corrupt checkpoint: trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw CheckpointError("corrupt checkpoint: unexpected end of data");
  }
  const std::string& in_;
  std::size_t pos_ = 4;
};

void write_cloud(Writer& w, const GaussianCloud& cloud) {
  w.u64(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    w.vec<3>(cloud.positions[i]);
    w.vec<3>(cloud.log_scales[i]);
    w.vec<4>(cloud.rotations[i]);
    w.vec<3>(cloud.sh_colors[i]);
    w.f64(cloud.logit_opacities[i]);
  }
  const DeformationParams& d = cloud.deformation;
  w.i32(d.basis_count);
  w.f64(d.t_origin);
  w.f64(d.t_span);
  w.doubles(d.taus);
  w.doubles(d.log_sigmas);
  w.doubles(d.weights);
}

GaussianCloud read_cloud(Reader& r) {
  GaussianCloud cloud;
  const std::size_t n = r.length(16 * sizeof(double));
  for (std::size_t i = 0; i < n; ++i) {
    cloud.positions.push_back(r.vec<3>());
    cloud.log_scales.push_back(r.vec<3>());
    cloud.rotations.push_back(r.vec<4>());
    cloud.sh_colors.push_back(r.vec<3>());
    cloud.logit_opacities.push_back(r.f64());
  }
  DeformationParams& d = cloud.deformation;
  d.basis_count = r.i32();
  d.t_origin = r.f64();
  d.t_span = r.f64();
  d.taus = r.doubles();
  d.log_sigmas = r.doubles();
  d.weights = r.doubles();
  const std::size_t expect = n * static_cast<std::size_t>(std::max(d.basis_count, 0));
  if (d.basis_count < 0 || d.taus.size() != expect || d.log_sigmas.size() != expect ||
      d.weights.size() != expect * kDeformDims)
    throw CheckpointError("corrupt checkpoint: deformation sizes do not match the cloud");
  return cloud;
}

}  // namespace

std::string serialize_checkpoint(const TrainConfig& config, const CameraIntrinsics& intrinsics,
                                 const ReconstructionState& state) {
  Writer w;
  w.bytes().append(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.text(train_config_to_json(config));
  w.f64(intrinsics.fx);
  w.f64(intrinsics.fy);
  w.f64(intrinsics.cx);
  w.f64(intrinsics.cy);
  w.i32(intrinsics.width);
  w.i32(intrinsics.height);
  w.f64(intrinsics.near);

  w.u64(state.segments.size());
  for (const ModelSegment& s : state.segments) {
    w.i32(s.frame_begin);
    w.i32(s.frame_end);
    w.f64(s.t_begin);
    w.f64(s.t_end);
    w.f64(s.scene_extent);
    write_cloud(w, s.cloud);
    const DeformationOptimizer& o = s.optimizer;
    for (const auto* v : {&o.m_tau, &o.v_tau, &o.m_sigma, &o.v_sigma, &o.m_w, &o.v_w}) w.doubles(*v);
    w.u64(o.basis_steps.size());
    for (long step : o.basis_steps) w.scalar<std::int64_t>(step);
  }

  w.u64(state.trajectory.size());
  for (std::size_t i = 0; i < state.trajectory.size(); ++i) {
    w.f64(state.timestamps[i]);
    w.pose(state.trajectory[i]);
  }
  w.u64(state.deformation_updates);
  std::ostringstream rng;
  rng << state.rng;
  w.text(rng.str());
  return std::move(w.bytes());
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw CheckpointError("corrupt checkpoint: bad magic");
  Reader r(bytes);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw UnsupportedVersionError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  try {
    ck.config = train_config_from_json(r.text());
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint: bad config: ") + e.what());
  }
  CameraIntrinsics& k = ck.intrinsics;
  k.fx = r.f64();
  k.fy = r.f64();
  k.cx = r.f64();
  k.cy = r.f64();
  k.width = r.i32();
  k.height = r.i32();
  k.near = r.f64();

  ReconstructionState& st = ck.state;
  const std::size_t segments = r.length(1);
  for (std::size_t i = 0; i < segments; ++i) {
    ModelSegment s;
    s.frame_begin = r.i32();
    s.frame_end = r.i32();
    s.t_begin = r.f64();
    s.t_end = r.f64();
    s.scene_extent = r.f64();
    s.cloud = read_cloud(r);
    DeformationOptimizer& o = s.optimizer;
    for (auto* v : {&o.m_tau, &o.v_tau, &o.m_sigma, &o.v_sigma, &o.m_w, &o.v_w}) *v = r.doubles();
    o.basis_steps.resize(r.length(sizeof(std::int64_t)));
    for (long& step : o.basis_steps) step = static_cast<long>(r.scalar<std::int64_t>());
    st.segments.push_back(std::move(s));
  }

  const std::size_t frames = r.length(13 * sizeof(double));
  st.history = PoseHistory(2 * static_cast<std::size_t>(ck.config.velocity_window));
  for (std::size_t i = 0; i < frames; ++i) {
    st.timestamps.push_back(r.f64());
    st.trajectory.push_back(r.pose());
  }
  const std::size_t first = frames > st.history.capacity() ? frames - st.history.capacity() : 0;
  try {
    for (std::size_t i = first; i < frames; ++i) st.history.push(st.timestamps[i], st.trajectory[i]);
  } catch (const std::exception&) {
    throw CheckpointError("corrupt checkpoint: trajectory timestamps not increasing");
  }
  st.deformation_updates = r.u64();
  std::istringstream rng(r.text());
  rng >> st.rng;
  if (!rng) throw CheckpointError("corrupt checkpoint: bad rng state");
  r.expect_end();
  return ck;
}

void save_checkpoint(const std::string& path, const TrainConfig& config, const CameraIntrinsics& intrinsics,
                     const ReconstructionState& state) {
  const std::string bytes = serialize_checkpoint(config, intrinsics, state);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_text_file(path)); }

}  // namespace dygs
