#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flowi2i/grid.hpp"

namespace flowi2i {

struct SsimSpec {
  int window_size = 11;
  double window_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;

  void validate() const;
  double c1() const { return (k1 * data_range) * (k1 * data_range); }
  double c2() const { return (k2 * data_range) * (k2 * data_range); }
};

/// Mean SSIM over all valid Gaussian-window positions. Both images are mapped
/// from their declared ranges onto [0, 1] first.
double ssim(const ImageGrid& a, const ImageGrid& b, const SsimSpec& spec = {});

/// Mean absolute difference after mapping both images onto [0, 1].
double mae_normed(const ImageGrid& a, const ImageGrid& b);

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  long count = 0;
};

/// Sample mean and unbiased (n - 1) covariance of the rows.
FeatureStats fit_stats(const Eigen::MatrixXd& features);

/// Clamp threshold for tiny negative eigenvalues, relative to the trace.
inline constexpr double kSqrtClampRelative = 1e-6;

/// |mu_p - mu_q|^2 + tr(S_p + S_q - 2 (S_p S_q)^(1/2)).
double frechet_distance(const FeatureStats& p, const FeatureStats& q);

struct KidResult {
  double mean = 0.0;
  double std = 0.0;
};

/// Polynomial kernel (x . y / d + 1)^3.
double kid_kernel(const Eigen::Ref<const Eigen::RowVectorXd>& x, const Eigen::Ref<const Eigen::RowVectorXd>& y);

/// Unbiased MMD^2 between two equally sized sample sets.
double mmd2_unbiased(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Mean and (population) standard deviation of the unbiased MMD^2 over
/// `n_subsets` random subset pairs of `subset_size` rows each.
KidResult kid(const Eigen::MatrixXd& features_a, const Eigen::MatrixXd& features_b, int subset_size, int n_subsets,
              std::uint64_t seed);

/// "0.023725 ± 0.000856"
std::string format_kid(const KidResult& r);

}  // namespace flowi2i
