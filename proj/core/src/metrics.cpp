#include "flowi2i/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "flowi2i/errors.hpp"
#include "flowi2i/rng.hpp"

namespace flowi2i {
namespace {

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size));
  const double r = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    w[i] = std::exp(-(i - r) * (i - r) / (2.0 * sigma * sigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Separable "valid" filtering of an h x w image with window w1d.
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1;
  const int oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * img[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

void SsimSpec::validate() const {
  if (window_size < 1 || window_size % 2 == 0) throw ParameterError("SSIM window size must be odd and positive");
  if (!(window_sigma > 0.0) || !(data_range > 0.0)) throw ParameterError("SSIM sigma and data range must be positive");
  if (!(c1() > 0.0) || !(c2() > 0.0)) throw ParameterError("SSIM constants must be positive");
}

double ssim(const ImageGrid& a, const ImageGrid& b, const SsimSpec& spec) {
  spec.validate();
  if (!a.same_shape(b)) throw ShapeError("ssim: image shapes differ");
  if (spec.window_size > a.height() || spec.window_size > a.width()) {
    throw ParameterError("ssim: window larger than image");
  }
  const int h = a.height();
  const int w = a.width();
  const std::vector<double> x = a.unit_values();
  const std::vector<double> y = b.unit_values();
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto k = gaussian_window(spec.window_size, spec.window_sigma);
  const auto mx = filter_valid(x, h, w, k);
  const auto my = filter_valid(y, h, w, k);
  const auto mxx = filter_valid(xx, h, w, k);
  const auto myy = filter_valid(yy, h, w, k);
  const auto mxy = filter_valid(xy, h, w, k);
  const double c1 = spec.c1();
  const double c2 = spec.c2();
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double sxx = mxx[i] - mx[i] * mx[i];
    const double syy = myy[i] - my[i] * my[i];
    const double sxy = mxy[i] - mx[i] * my[i];
    const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * sxy + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (sxx + syy + c2);
    total += num / den;
  }
  return total / static_cast<double>(mx.size());
}

double mae_normed(const ImageGrid& a, const ImageGrid& b) {
  if (!a.same_shape(b)) throw ShapeError("mae_normed: image shapes differ");
  const auto x = a.unit_values();
  const auto y = b.unit_values();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += std::fabs(x[i] - y[i]);
  return acc / static_cast<double>(x.size());
}

FeatureStats fit_stats(const Eigen::MatrixXd& features) {
  if (features.rows() < 2) throw ParameterError("fit_stats: need at least two feature rows");
  FeatureStats s;
  s.count = features.rows();
  s.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  s.cov = (centered.transpose() * centered) / static_cast<double>(features.rows() - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  return s;
}

double frechet_distance(const FeatureStats& p, const FeatureStats& q) {
  if (p.mean.size() != q.mean.size() || p.cov.rows() != q.cov.rows()) {
    throw ShapeError("frechet_distance: feature dimensions differ");
  }
  const double trace_scale = std::max(p.cov.trace() + q.cov.trace(), 1e-300);

  // tr((S_p S_q)^(1/2)) = tr((S_p^(1/2) S_q S_p^(1/2))^(1/2)); the inner
  // product is symmetric PSD.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ep(p.cov);
  Eigen::VectorXd lp = ep.eigenvalues();
  for (Eigen::Index i = 0; i < lp.size(); ++i) {
    if (lp(i) < -kSqrtClampRelative * trace_scale) {
      throw NumericalError("frechet_distance: covariance has eigenvalue " + std::to_string(lp(i)) +
                           " below the clamp threshold " + std::to_string(-kSqrtClampRelative * trace_scale));
    }
    lp(i) = std::sqrt(std::max(lp(i), 0.0));
  }
  const Eigen::MatrixXd sqrt_p = ep.eigenvectors() * lp.asDiagonal() * ep.eigenvectors().transpose();
  Eigen::MatrixXd inner = sqrt_p * q.cov * sqrt_p;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ei(inner, Eigen::EigenvaluesOnly);
  double trace_sqrt = 0.0;
  const double inner_scale = std::max(inner.trace(), 1e-300);
  for (Eigen::Index i = 0; i < ei.eigenvalues().size(); ++i) {
    const double l = ei.eigenvalues()(i);
    if (l < -kSqrtClampRelative * inner_scale) {
      throw NumericalError("frechet_distance: product has eigenvalue " + std::to_string(l) +
                           " below the clamp threshold");
    }
    trace_sqrt += std::sqrt(std::max(l, 0.0));
  }
  const double mean_term = (p.mean - q.mean).squaredNorm();
  const double fd = mean_term + p.cov.trace() + q.cov.trace() - 2.0 * trace_sqrt;
  return std::max(fd, 0.0);
}

double kid_kernel(const Eigen::Ref<const Eigen::RowVectorXd>& x, const Eigen::Ref<const Eigen::RowVectorXd>& y) {
  const double v = x.dot(y) / static_cast<double>(x.size()) + 1.0;
  return v * v * v;
}

double mmd2_unbiased(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("mmd2_unbiased: sets must have equal shape");
  const Eigen::Index m = a.rows();
  if (m < 2) throw ParameterError("mmd2_unbiased: need at least two samples per set");
  const double d = static_cast<double>(a.cols());
  auto kernel = [d](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    Eigen::MatrixXd k = (x * y.transpose()) / d;
    k.array() += 1.0;
    return Eigen::MatrixXd(k.array().cube());
  };
  const Eigen::MatrixXd kaa = kernel(a, a);
  const Eigen::MatrixXd kbb = kernel(b, b);
  const Eigen::MatrixXd kab = kernel(a, b);
  const double md = static_cast<double>(m);
  const double within_a = (kaa.sum() - kaa.trace()) / (md * (md - 1.0));
  const double within_b = (kbb.sum() - kbb.trace()) / (md * (md - 1.0));
  const double across = kab.sum() / (md * md);
  return within_a + within_b - 2.0 * across;
}

KidResult kid(const Eigen::MatrixXd& features_a, const Eigen::MatrixXd& features_b, int subset_size, int n_subsets,
              std::uint64_t seed) {
  if (features_a.cols() != features_b.cols()) throw ShapeError("kid: feature dimensions differ");
  if (n_subsets < 1) throw ParameterError("kid: n_subsets must be >= 1");
  if (subset_size < 2 || subset_size > features_a.rows() || subset_size > features_b.rows()) {
    throw ParameterError("kid: subset_size must be in [2, min(n, m)]");
  }
  auto pick = [subset_size](const Eigen::MatrixXd& f, Rng& rng) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(f.rows()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    // Partial Fisher-Yates: first subset_size entries are a uniform draw
    // without replacement.
    for (int i = 0; i < subset_size; ++i) {
      std::uniform_int_distribution<std::size_t> d(static_cast<std::size_t>(i), idx.size() - 1);
      std::swap(idx[i], idx[d(rng)]);
    }
    Eigen::MatrixXd out(subset_size, f.cols());
    for (int i = 0; i < subset_size; ++i) out.row(i) = f.row(idx[i]);
    return out;
  };
  std::vector<double> values(static_cast<std::size_t>(n_subsets));
  for (int s = 0; s < n_subsets; ++s) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
    const Eigen::MatrixXd a = pick(features_a, rng);
    const Eigen::MatrixXd b = pick(features_b, rng);
    values[s] = mmd2_unbiased(a, b);
  }
  KidResult r;
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / n_subsets;
  double var = 0.0;
  for (double v : values) var += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(var / n_subsets);
  return r;
}

std::string format_kid(const KidResult& r) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f ± %.6f", r.mean, r.std);
  return buf;
}

}  // namespace flowi2i
