#pragma once

// Independent reference implementations shared by unit and acceptance tests.
// Each is written for clarity (plain loops, double precision), not speed.

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "flowi2i/grid.hpp"
#include "flowi2i/rng.hpp"

namespace flowi2i::oracle {

// Element-by-element mean squared error in double.
inline double mse(const LatentGrid& a, const LatentGrid& b) {
  double sum = 0.0;
  for (int c = 0; c < a.channels(); ++c)
    for (int y = 0; y < a.height(); ++y)
      for (int x = 0; x < a.width(); ++x) {
        const double d = static_cast<double>(a.at(c, y, x)) - b.at(c, y, x);
        sum += d * d;
      }
  return sum / static_cast<double>(a.size());
}

// Direct windowed SSIM: per position, weighted moments with a 2-D Gaussian
// window and centred (not expanded) variance sums.
inline double ssim(const ImageGrid& a, const ImageGrid& b, int size = 11, double sigma = 1.5) {
  const auto x = a.unit_values();
  const auto y = b.unit_values();
  const int h = a.height();
  const int w = a.width();
  std::vector<double> win(static_cast<std::size_t>(size) * size);
  double total_w = 0.0;
  const double r = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      win[static_cast<std::size_t>(i) * size + j] = std::exp(-((i - r) * (i - r) + (j - r) * (j - r)) / (2 * sigma * sigma));
      total_w += win[static_cast<std::size_t>(i) * size + j];
    }
  for (double& v : win) v /= total_w;
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  double sum = 0.0;
  int count = 0;
  for (int oy = 0; oy + size <= h; ++oy) {
    for (int ox = 0; ox + size <= w; ++ox) {
      double mx = 0, my = 0;
      for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
          const double wt = win[static_cast<std::size_t>(i) * size + j];
          mx += wt * x[static_cast<std::size_t>(oy + i) * w + ox + j];
          my += wt * y[static_cast<std::size_t>(oy + i) * w + ox + j];
        }
      double vx = 0, vy = 0, cxy = 0;
      for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
          const double wt = win[static_cast<std::size_t>(i) * size + j];
          const double dx = x[static_cast<std::size_t>(oy + i) * w + ox + j] - mx;
          const double dy = y[static_cast<std::size_t>(oy + i) * w + ox + j] - my;
          vx += wt * dx * dx;
          vy += wt * dy * dy;
          cxy += wt * dx * dy;
        }
      sum += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return sum / count;
}

inline Eigen::MatrixXd random_features(int n, int d, std::uint64_t seed, double shift = 0.0) {
  Rng rng(seed);
  Eigen::MatrixXd m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = standard_normal(rng) + shift;
  return m;
}

// Unbiased MMD^2 by explicit double loops over the cubic polynomial kernel.
inline double mmd2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const auto n = a.rows();
  const double d = static_cast<double>(a.cols());
  auto k = [d](const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) {
    double dot = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) dot += x(i) * y(i);
    return std::pow(dot / d + 1.0, 3);
  };
  double kaa = 0, kbb = 0, kab = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j) {
        kaa += k(a.row(i), a.row(j));
        kbb += k(b.row(i), b.row(j));
      }
      kab += k(a.row(i), b.row(j));
    }
  const double nn = static_cast<double>(n);
  return kaa / (nn * (nn - 1)) + kbb / (nn * (nn - 1)) - 2.0 * kab / (nn * nn);
}

// Least-squares slope of log(error) against log(1 / steps).
inline double convergence_slope(const std::vector<int>& steps, const std::vector<double>& errors) {
  const int n = static_cast<int>(steps.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const double x = std::log(1.0 / steps[i]);
    const double y = std::log(errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace flowi2i::oracle
