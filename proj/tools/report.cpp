#include "report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace flowi2i::cli {
namespace {

std::string pad(const std::string& s, std::size_t width) {
  // Display width ignores UTF-8 continuation bytes (arrows, plus-minus).
  std::size_t shown = 0;
  for (unsigned char c : s) shown += (c & 0xC0) != 0x80 ? 1 : 0;
  return s + std::string(width > shown ? width - shown : 0, ' ');
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string render(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> widths;
  for (const auto& row : cells) {
    widths.resize(std::max(widths.size(), row.size()), 0);
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::size_t shown = 0;
      for (unsigned char c : row[i]) shown += (c & 0xC0) != 0x80 ? 1 : 0;
      widths[i] = std::max(widths[i], shown);
    }
  }
  std::size_t total = 0;
  for (auto w : widths) total += w + 2;
  const std::string rule(total > 2 ? total - 2 : 0, '-');
  std::ostringstream os;
  os << rule << "\n";
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t i = 0; i < cells[r].size(); ++i) {
      os << (i + 1 < cells[r].size() ? pad(cells[r][i], widths[i] + 2) : cells[r][i]);
    }
    os << "\n";
    if (r == 0) os << rule << "\n";
  }
  os << rule << "\n";
  return os.str();
}

}  // namespace

std::string paired_table(const std::vector<PairedRow>& rows) {
  std::vector<std::vector<std::string>> cells{{"Method", "SSIM ↑", "MAE (normed) ↓", "n"}};
  for (const auto& r : rows) {
    cells.push_back({r.method, fixed(r.ssim, 4) + " ± " + fixed(r.ssim_std, 4),
                     fixed(r.mae, 4) + " ± " + fixed(r.mae_std, 4), std::to_string(r.count)});
  }
  return render(cells);
}

std::string distribution_table(const std::vector<DistributionRow>& rows) {
  std::vector<std::vector<std::string>> cells{{"Method", "FID ↓", "KID ↓", "n"}};
  for (const auto& r : rows) {
    cells.push_back({r.method, fixed(r.fid, 2), format_kid(r.kid), std::to_string(r.count)});
  }
  return render(cells);
}

nlohmann::json to_json(const PairedRow& r) {
  return {{"method", r.method}, {"ssim", r.ssim}, {"ssim_std", r.ssim_std},
          {"mae", r.mae},       {"mae_std", r.mae_std}, {"count", r.count}};
}

nlohmann::json to_json(const DistributionRow& r) {
  return {{"method", r.method}, {"fid", r.fid}, {"kid_mean", r.kid.mean}, {"kid_std", r.kid.std}, {"count", r.count}};
}

}  // namespace flowi2i::cli
