#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowi2i/metrics.hpp"

namespace flowi2i::cli {

struct PairedRow {
  std::string method;
  double ssim = 0.0;
  double ssim_std = 0.0;
  double mae = 0.0;
  double mae_std = 0.0;
  int count = 0;
};

struct DistributionRow {
  std::string method;
  double fid = 0.0;
  KidResult kid;
  int count = 0;
};

// Column layout of the paired (SSIM / MAE) and distribution (FID / KID)
// result tables.
std::string paired_table(const std::vector<PairedRow>& rows);
std::string distribution_table(const std::vector<DistributionRow>& rows);

nlohmann::json to_json(const PairedRow& r);
nlohmann::json to_json(const DistributionRow& r);

}  // namespace flowi2i::cli
