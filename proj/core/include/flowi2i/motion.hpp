#pragma once

#include <cstdint>
#include <vector>

#include "flowi2i/grid.hpp"
#include "flowi2i/metrics.hpp"
#include "flowi2i/rng.hpp"

namespace flowi2i {

/// Rigid pose held while k-space rows [row_begin, row_end) were acquired.
/// Rows are indexed in centred order: row r holds frequency ky = r - N/2.
struct MotionSegment {
  int row_begin = 0;
  int row_end = 0;
  double dx = 0.0;     // pixels, +x shifts content right
  double dy = 0.0;     // pixels, +y shifts content down
  double theta = 0.0;  // radians, about the image centre

  bool is_still() const noexcept { return dx == 0.0 && dy == 0.0 && theta == 0.0; }
  bool operator==(const MotionSegment&) const = default;
};

struct MotionTrajectory {
  std::vector<MotionSegment> segments;

  bool is_identity() const;
  /// Segments must be ordered, disjoint and cover [0, rows).
  void validate(int rows) const;
  static MotionTrajectory identity(int rows);
  bool operator==(const MotionTrajectory&) const = default;
};

struct MotionParams {
  double max_shift = 8.0;   // pixels at severity 1
  double max_rotation = 0.1;  // radians at severity 1
  int min_segments = 2;
  int max_segments = 8;
};

/// Retrospective corruption: each segment's rows are taken from the 2-D DFT
/// of the image in that segment's pose; the output is the magnitude of the
/// inverse transform of the composite, mapped back to the input range.
ImageGrid corrupt(const ImageGrid& image, const MotionTrajectory& trajectory);

/// Random contiguous segmentation with per-segment motion scaled by
/// severity; the segment holding the k-space centre is kept still with
/// probability 0.5.
MotionTrajectory draw_trajectory(double severity, Rng& rng, int rows, const MotionParams& params = {});

struct GateSpec {
  double s0 = 0.6;
  double s1 = 0.9;
  int max_retries = 50;

  void validate() const;
  bool accepts(double ssim_value) const { return s0 < ssim_value && ssim_value < s1; }
};

struct GeneratedPair {
  ImageGrid corrupted;
  double gate_ssim = 0.0;
  MotionTrajectory trajectory;
  std::uint64_t seed = 0;
  int attempts = 0;
  double final_severity = 0.0;
};

struct PairGenerationOptions {
  MotionParams motion;
  double initial_severity = 0.5;
  double escalate = 1.5;   // when SSIM >= s1 (too mild)
  double relax = 0.67;     // when SSIM <= s0 (too severe)
  SsimSpec ssim;
};

/// Draws corruptions until SSIM(clean, corrupted) falls strictly inside the
/// gate, adapting severity after each miss. Deterministic in (clean, gate,
/// seed, options). Throws GateFailure when the retry budget runs out.
GeneratedPair generate_pair(const ImageGrid& clean, const GateSpec& gate, std::uint64_t seed,
                            const PairGenerationOptions& options = {});

}  // namespace flowi2i
