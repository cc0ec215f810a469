#include "dygs/metrics.hpp"
#include "dygs/pose_dynamics.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace dygs {
namespace {

Image constant_image(int w, int h, double v) { return Image(w, h, 3, v); }

TEST(Psnr, Examples) {
  const Image a = constant_image(16, 16, 0.4);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
  const Image b = constant_image(16, 16, 0.5);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  Image c = a;
  Mask m(16, 16, true);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 8; ++x) {
      m.set(x, y, false);
      for (int ch = 0; ch < 3; ++ch) c.at(x, y, ch) += 0.1;
    }
  EXPECT_EQ(psnr(a, c, &m), kPsnrCap);
  EXPECT_LT(psnr(a, c), 30.0);
}

TEST(Psnr, EmptyMaskIsUndefined) {
  const Image a = constant_image(8, 8, 0.4);
  const Mask m(8, 8, false);
  EXPECT_THROW(psnr(a, a, &m), MetricError);
}

TEST(Psnr, Symmetric) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image a(12, 9, 3), b(12, 9, 3);
  for (double& v : a.data) v = u(rng);
  for (double& v : b.data) v = u(rng);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
}

TEST(Ssim, IdenticalIsOne) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image a(20, 15, 3);
  for (double& v : a.data) v = u(rng);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, InvertedCheckerboardIsNegative) {
  Image a(11, 11, 3), b(11, 11, 3);
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 11; ++x)
      for (int c = 0; c < 3; ++c) {
        a.at(x, y, c) = (x + y) % 2;
        b.at(x, y, c) = 1.0 - a.at(x, y, c);
      }
  EXPECT_LT(ssim(a, b), 0.0);
}

TEST(Ssim, ConstantsMatchLuminanceTerm) {
  const double m1 = 0.3, m2 = 0.4, c1 = 1e-4;
  const double expected = (2 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
  EXPECT_NEAR(ssim(constant_image(16, 16, m1), constant_image(16, 16, m2)), expected, 1e-12);
}

TEST(Ssim, TooSmallThrows) {
  EXPECT_THROW(ssim(constant_image(10, 20, 0.1), constant_image(10, 20, 0.1)), std::invalid_argument);
}

Trajectory arc_trajectory(int n) {
  Trajectory t;
  for (int i = 0; i < n; ++i) {
    const double a = 0.01 * i;
    Se3Pose c2w;
    c2w.rotation = so3_exp(Vec3(0, a, 0));
    c2w.translation = Vec3(0.3 * std::sin(a), 0.002 * i * i * 1e-2, 0.3 * std::cos(a));
    t.timestamps.push_back(i / 30.0);
    t.poses.push_back(c2w.inverse());
  }
  return t;
}

/// Best rigid alignment by direct search over rotations; the translation is the
/// centroid difference for a fixed rotation.
double brute_force_ate(const std::vector<Vec3>& est, const std::vector<Vec3>& ref) {
  Vec3 ce = Vec3::Zero(), cr = Vec3::Zero();
  for (std::size_t i = 0; i < est.size(); ++i) {
    ce += est[i];
    cr += ref[i];
  }
  ce /= static_cast<double>(est.size());
  cr /= static_cast<double>(ref.size());
  auto cost = [&](const Vec3& w) {
    const Mat3 r = so3_exp(w);
    double s = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) s += (r * (est[i] - ce) + cr - ref[i]).squaredNorm();
    return s;
  };
  Vec3 w = Vec3::Zero();
  double best = cost(w);
  for (double step = 0.1; step > 1e-12; step *= 0.5) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (int d = 0; d < 3; ++d)
        for (double sign : {-1.0, 1.0}) {
          Vec3 cand = w;
          cand[d] += sign * step;
          const double c = cost(cand);
          if (c < best) {
            best = c;
            w = cand;
            improved = true;
          }
        }
    }
  }
  return std::sqrt(best / static_cast<double>(est.size())) * 1000.0;
}

TEST(Ate, IdenticalIsZero) {
  const Trajectory t = arc_trajectory(50);
  EXPECT_LT(ate(t, t), 1e-9);
}

TEST(Ate, InvariantToGlobalRigidTransform) {
  const Trajectory ref = arc_trajectory(50);
  std::mt19937_64 rng(3);
  const Se3Pose a = testing::small_pose(rng, 1.0, 2.0);
  Trajectory est = ref;
  for (Se3Pose& p : est.poses) p = p * a;
  EXPECT_LT(ate(est, ref), 1e-9);
  EXPECT_LT(ate(ref, est), 1e-9);
}

TEST(Ate, SingleOffsetMatchesBruteForce) {
  const Trajectory ref = arc_trajectory(100);
  Trajectory est = ref;
  Se3Pose c2w = est.poses[40].inverse();
  c2w.translation += Vec3(0.005, 0, 0);
  est.poses[40] = c2w.inverse();
  const double fast = ate(est, ref);
  EXPECT_NEAR(fast, brute_force_ate(est.centers(), ref.centers()), 1e-6);
  EXPECT_NEAR(fast, 0.5, 0.01);
}

TEST(Ate, SingleOffsetAmongIdenticalPoses) {
  Trajectory ref;
  for (int i = 0; i < 100; ++i) {
    ref.timestamps.push_back(i);
    ref.poses.push_back(Se3Pose::identity());
  }
  Trajectory est = ref;
  est.poses[7].translation = Vec3(-0.005, 0, 0);
  // Residuals 4.95 mm once and 0.05 mm 99 times.
  EXPECT_NEAR(ate(est, ref), std::sqrt((4.95 * 4.95 + 99 * 0.05 * 0.05) / 100.0), 1e-9);
}

TEST(Ate, LengthMismatchThrows) {
  EXPECT_THROW(ate(arc_trajectory(5), arc_trajectory(6)), std::invalid_argument);
}

TEST(Trajectory, LengthAndCenters) {
  Trajectory t;
  for (int i = 0; i < 4; ++i) {
    Se3Pose c2w;
    c2w.translation = Vec3(i, 0, 0);
    t.timestamps.push_back(i);
    t.poses.push_back(c2w.inverse());
  }
  EXPECT_NEAR(t.length(), 3.0, 1e-15);
  EXPECT_TRUE(t.centers()[2].isApprox(Vec3(2, 0, 0)));
}

}  // namespace
}  // namespace dygs
