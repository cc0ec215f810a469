#include "dygs/pose_dynamics.hpp"
#include "dygs/rasterizer.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <numeric>

namespace dygs {
namespace {

using testing::close_rel;
using testing::contract;

struct GradCase {
  GaussianCloud cloud;
  Se3Pose pose;
  CameraIntrinsics k;
  RenderUpstream up;
};

GradCase make_case(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  GradCase c;
  c.k = testing::small_camera();
  for (int attempt = 0;; ++attempt) {
    if (attempt == 10000) throw std::runtime_error("no smooth scene found");
    c.cloud = testing::random_cloud(rng, n, c.k);
    c.pose = testing::small_pose(rng);
    if (!testing::near_discontinuity(c.cloud, c.pose, c.k)) break;
  }
  c.up = testing::random_upstream(rng, c.k);
  return c;
}

double objective(const GradCase& c, const GaussianCloud& cloud, const Se3Pose& pose) {
  return contract(render(cloud, pose, c.k), c.up);
}

TEST(Rasterizer, SingleGaussianCenterPixel) {
  const CameraIntrinsics k{10.0, 10.0, 2.0, 2.0, 5, 5, 0.01};
  GaussianCloud cloud;
  cloud.push_back(Vec3(0, 0, 1), Vec3::Constant(std::log(0.1)), Quat(1, 0, 0, 0), color_to_sh(Vec3(0.2, 0.4, 0.6)),
                  logit(0.5));
  const RenderOutput out = render(cloud, Se3Pose::identity(), k);
  // Center pixel: G = 1, weight = opacity.
  EXPECT_NEAR(out.alpha.at(2, 2), 0.5, 1e-12);
  EXPECT_NEAR(out.color.at(2, 2, 1), 0.2, 1e-12);
  EXPECT_NEAR(out.depth.at(2, 2), 0.5, 1e-12);
  // Neighbor one pixel right: screen variance 1 + 0.3.
  EXPECT_NEAR(out.alpha.at(3, 2), 0.5 * std::exp(-0.5 / 1.3), 1e-12);
}

TEST(Rasterizer, EmptyCloudRendersZero) {
  const CameraIntrinsics k = testing::small_camera(8, 8);
  const RenderOutput out = render(GaussianCloud{}, Se3Pose::identity(), k);
  for (double v : out.alpha.data) EXPECT_EQ(v, 0.0);
  for (double v : out.color.data) EXPECT_EQ(v, 0.0);
}

TEST(Rasterizer, BehindCameraIsInvisible) {
  const CameraIntrinsics k = testing::small_camera(8, 8);
  GaussianCloud cloud;
  cloud.push_back(Vec3(0, 0, -1), Vec3::Constant(-2.0), Quat(1, 0, 0, 0), Vec3::Zero(), logit(0.9));
  const Rasterizer r(cloud, Se3Pose::identity(), k);
  EXPECT_EQ(r.visible_count(), 0u);
}

TEST(Rasterizer, OpacityClampAtMaxAlpha) {
  const CameraIntrinsics k{10.0, 10.0, 2.0, 2.0, 5, 5, 0.01};
  GaussianCloud cloud;
  cloud.push_back(Vec3(0, 0, 1), Vec3::Constant(std::log(0.2)), Quat(1, 0, 0, 0), Vec3::Zero(), logit(0.999999));
  const RenderOutput out = render(cloud, Se3Pose::identity(), k);
  EXPECT_NEAR(out.alpha.at(2, 2), kMaxAlpha, 1e-12);
}

TEST(Rasterizer, FrontSplatOccludes) {
  const CameraIntrinsics k{10.0, 10.0, 2.0, 2.0, 5, 5, 0.01};
  GaussianCloud cloud;
  cloud.push_back(Vec3(0, 0, 2), Vec3::Constant(std::log(0.3)), Quat(1, 0, 0, 0), color_to_sh(Vec3(0, 0, 1)),
                  logit(0.5));
  cloud.push_back(Vec3(0, 0, 1), Vec3::Constant(std::log(0.3)), Quat(1, 0, 0, 0), color_to_sh(Vec3(1, 0, 0)),
                  logit(0.5));
  const RenderOutput out = render(cloud, Se3Pose::identity(), k);
  EXPECT_NEAR(out.color.at(2, 2, 0), 0.5, 1e-12);
  EXPECT_NEAR(out.color.at(2, 2, 2), 0.25, 1e-12);
  EXPECT_NEAR(out.alpha.at(2, 2), 0.75, 1e-12);
}

TEST(Rasterizer, TiledMatchesReference) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const CameraIntrinsics k = testing::small_camera(64, 48, 50.0);
    const GaussianCloud cloud = testing::random_cloud(rng, 200, k);
    const Se3Pose pose = testing::small_pose(rng);
    const RenderOutput a = render(cloud, pose, k);
    const RenderOutput b = render_reference(cloud, pose, k);
    EXPECT_EQ(a.color, b.color);
    EXPECT_EQ(a.depth, b.depth);
    EXPECT_EQ(a.alpha, b.alpha);
  }
}

TEST(Rasterizer, PermutationInvariantWithDistinctDepths) {
  std::mt19937_64 rng(5);
  const CameraIntrinsics k = testing::small_camera();
  const GaussianCloud cloud = testing::random_cloud(rng, 40, k);
  std::vector<std::size_t> perm(cloud.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  GaussianCloud shuffled;
  for (auto i : perm)
    shuffled.push_back(cloud.positions[i], cloud.log_scales[i], cloud.rotations[i], cloud.sh_colors[i],
                       cloud.logit_opacities[i]);
  const RenderOutput a = render(cloud, Se3Pose::identity(), k);
  const RenderOutput b = render(shuffled, Se3Pose::identity(), k);
  for (std::size_t i = 0; i < a.color.data.size(); ++i) EXPECT_NEAR(a.color.data[i], b.color.data[i], 1e-12);
}

TEST(Rasterizer, RigidMotionConsistency) {
  std::mt19937_64 rng(9);
  const CameraIntrinsics k = testing::small_camera();
  const GaussianCloud cloud = testing::random_cloud(rng, 40, k);
  const Se3Pose pose = testing::small_pose(rng);
  const Se3Pose motion = testing::small_pose(rng, 0.4, 0.5);
  // Moving the world by A and the camera by A^-1 leaves the image unchanged.
  const GaussianCloud moved = transform_cloud(cloud, motion);
  const RenderOutput a = render(cloud, pose, k);
  const RenderOutput b = render(moved, pose * motion.inverse(), k);
  for (std::size_t i = 0; i < a.color.data.size(); ++i) EXPECT_NEAR(a.color.data[i], b.color.data[i], 1e-9);
  for (std::size_t i = 0; i < a.depth.data.size(); ++i) EXPECT_NEAR(a.depth.data[i], b.depth.data[i], 1e-9);
}

TEST(Rasterizer, BackwardMatchesFiniteDifferences) {
  constexpr double h = 1e-4;
  int checked = 0;
  for (std::uint64_t seed = 100; seed < 103; ++seed) {
    const GradCase c = make_case(seed, 20);
    const RenderGradients g = render_backward(c.cloud, c.pose, c.k, c.up);
    GaussianCloud work = c.cloud;
    auto fd = [&](double& slot) {
      const double saved = slot;
      slot = saved + h;
      const double fp = objective(c, work, c.pose);
      slot = saved - h;
      const double fm = objective(c, work, c.pose);
      slot = saved;
      return (fp - fm) / (2.0 * h);
    };
    for (std::size_t i = 0; i < c.cloud.size(); ++i) {
      for (int d = 0; d < 3; ++d) {
        EXPECT_PRED4(close_rel, g.positions[i][d], fd(work.positions[i][d]), 1e-3, 1e-8) << "pos " << i << d;
        EXPECT_PRED4(close_rel, g.log_scales[i][d], fd(work.log_scales[i][d]), 1e-3, 1e-8) << "scale " << i << d;
        EXPECT_PRED4(close_rel, g.sh_colors[i][d], fd(work.sh_colors[i][d]), 1e-3, 1e-8) << "color " << i << d;
      }
      for (int d = 0; d < 4; ++d)
        EXPECT_PRED4(close_rel, g.rotations[i][d], fd(work.rotations[i][d]), 1e-3, 1e-8) << "rot " << i << d;
      EXPECT_PRED4(close_rel, g.logit_opacities[i], fd(work.logit_opacities[i]), 1e-3, 1e-8) << "opacity " << i;
      ++checked;
    }
    for (int d = 0; d < 6; ++d) {
      Vec6 e = Vec6::Zero();
      e[d] = h;
      const double fp = objective(c, c.cloud, se3_exp(e) * c.pose);
      const double fm = objective(c, c.cloud, se3_exp(-e) * c.pose);
      EXPECT_PRED4(close_rel, g.pose[d], (fp - fm) / (2.0 * h), 1e-3, 1e-8) << "pose " << d;
    }
  }
  EXPECT_GT(checked, 0);
}

TEST(Rasterizer, BackwardIsDeterministic) {
  const GradCase c = make_case(7, 30);
  const RenderGradients a = render_backward(c.cloud, c.pose, c.k, c.up);
  const RenderGradients b = render_backward(c.cloud, c.pose, c.k, c.up);
  EXPECT_EQ(a.positions, b.positions);
  EXPECT_EQ(a.pose, b.pose);
}

TEST(Rasterizer, UpstreamShapeMismatchThrows) {
  const GradCase c = make_case(8, 5);
  RenderUpstream bad;
  bad.color = Image(3, 3, 3);
  EXPECT_THROW(render_backward(c.cloud, c.pose, c.k, bad), std::invalid_argument);
}

}  // namespace
}  // namespace dygs
