#include "dygs/metrics.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace dygs {

std::vector<Vec3> Trajectory::centers() const {
  std::vector<Vec3> out;
  out.reserve(poses.size());
  for (const auto& p : poses) out.push_back(-(p.rotation.transpose() * p.translation));
  return out;
}

double Trajectory::length() const {
  const auto c = centers();
  double total = 0.0;
  for (std::size_t i = 1; i < c.size(); ++i) total += (c[i] - c[i - 1]).norm();
  return total;
}

double psnr(const Image& a, const Image& b, const Mask* mask) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: image shapes differ");
  if (mask && (mask->width != a.width || mask->height != a.height))
    throw std::invalid_argument("psnr: mask shape differs");
  double sum = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (mask && !mask->at(x, y)) continue;
      for (int c = 0; c < a.channels; ++c) {
        const double d = a.at(x, y, c) - b.at(x, y, c);
        sum += d * d;
      }
      count += a.channels;
    }
  }
  if (count == 0) throw MetricError("psnr: mask selects no pixels");
  const double mse = sum / static_cast<double>(count);
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

Image luminance(const Image& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3) throw std::invalid_argument("ssim: expected 1 or 3 channels");
  Image out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.at(x, y) = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: image shapes differ");
  if (a.width < kWin || a.height < kWin) throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  const Image la = luminance(a), lb = luminance(b);

  double kernel[kWin];
  double ksum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    kernel[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    ksum += kernel[i];
  }
  for (double& k : kernel) k /= ksum;

  double total = 0.0;
  std::size_t windows = 0;
  for (int y = 0; y + kWin <= a.height; ++y) {
    for (int x = 0; x + kWin <= a.width; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int j = 0; j < kWin; ++j) {
        for (int i = 0; i < kWin; ++i) {
          const double w = kernel[i] * kernel[j];
          const double va = la.at(x + i, y + j), vb = lb.at(x + i, y + j);
          ma += w * va;
          mb += w * vb;
          saa += w * va * va;
          sbb += w * vb * vb;
          sab += w * va * vb;
        }
      }
      const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
      total += ((2 * ma * mb + kC1) * (2 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (var_a + var_b + kC2));
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

RigidAlignment umeyama_rigid(const std::vector<Vec3>& source, const std::vector<Vec3>& target) {
  if (source.size() != target.size()) throw std::invalid_argument("umeyama: point counts differ");
  RigidAlignment out;
  if (source.empty()) return out;
  Vec3 ms = Vec3::Zero(), mt = Vec3::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    ms += source[i];
    mt += target[i];
  }
  ms /= static_cast<double>(source.size());
  mt /= static_cast<double>(source.size());
  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) cov += (target[i] - mt) * (source[i] - ms).transpose();
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  out.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  out.translation = mt - out.rotation * ms;
  return out;
}

double ate(const Trajectory& estimated, const Trajectory& reference) {
  if (estimated.size() != reference.size()) throw std::invalid_argument("ate: trajectory lengths differ");
  if (estimated.size() == 0) throw std::invalid_argument("ate: empty trajectories");
  const auto est = estimated.centers();
  const auto ref = reference.centers();
  const RigidAlignment align = umeyama_rigid(est, ref);
  double sum = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i)
    sum += (align.rotation * est[i] + align.translation - ref[i]).squaredNorm();
  return 1000.0 * std::sqrt(sum / static_cast<double>(est.size()));
}

}  // namespace dygs
