#include "flowi2i/motion.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <numbers>

#include <fftw3.h>

#include "flowi2i/errors.hpp"

namespace flowi2i {
namespace {

using Complex = std::complex<double>;

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n)
      : data(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
    if (!data) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(data); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;

  Complex* complex() { return reinterpret_cast<Complex*>(data); }
  fftw_complex* data;
};

struct PlanDeleter {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
using Plan = std::unique_ptr<fftw_plan_s, PlanDeleter>;

// Signed frequency of DFT index k.
int signed_frequency(int k, int n) { return k < (n + 1) / 2 ? k : k - n; }

// Bilinear rotation about the centre; samples outside the frame read as 0.
std::vector<double> rotate(const std::vector<double>& img, int n, double theta) {
  if (theta == 0.0) return img;
  std::vector<double> out(img.size(), 0.0);
  const double c = (n - 1) / 2.0;
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  auto sample = [&](int y, int x) {
    return (y < 0 || y >= n || x < 0 || x >= n) ? 0.0 : img[static_cast<std::size_t>(y) * n + x];
  };
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      // Inverse map: output pixel -> source location.
      const double sx = ct * (x - c) + st * (y - c) + c;
      const double sy = -st * (x - c) + ct * (y - c) + c;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0;
      const double fy = sy - y0;
      out[static_cast<std::size_t>(y) * n + x] =
          (1 - fy) * ((1 - fx) * sample(y0, x0) + fx * sample(y0, x0 + 1)) +
          fy * ((1 - fx) * sample(y0 + 1, x0) + fx * sample(y0 + 1, x0 + 1));
    }
  }
  return out;
}

double gate_distance(const GateSpec& gate, double s) {
  if (s <= gate.s0) return gate.s0 - s;
  if (s >= gate.s1) return s - gate.s1;
  return 0.0;
}

}  // namespace

bool MotionTrajectory::is_identity() const {
  return std::all_of(segments.begin(), segments.end(), [](const MotionSegment& s) { return s.is_still(); });
}

void MotionTrajectory::validate(int rows) const {
  if (segments.empty()) throw TrajectoryError("trajectory has no segments");
  int next = 0;
  for (const auto& s : segments) {
    if (s.row_begin != next || s.row_end <= s.row_begin) {
      throw TrajectoryError("trajectory segments must be contiguous, ordered and non-empty");
    }
    if (!std::isfinite(s.dx) || !std::isfinite(s.dy) || !std::isfinite(s.theta)) {
      throw TrajectoryError("trajectory has non-finite motion parameters");
    }
    next = s.row_end;
  }
  if (next != rows) {
    throw TrajectoryError("trajectory covers rows [0, " + std::to_string(next) + ") but the image has " +
                          std::to_string(rows));
  }
}

MotionTrajectory MotionTrajectory::identity(int rows) { return {{MotionSegment{0, rows, 0.0, 0.0, 0.0}}}; }

ImageGrid corrupt(const ImageGrid& image, const MotionTrajectory& trajectory) {
  if (image.height() != image.width()) throw ShapeError("corrupt: image must be square");
  const int n = image.height();
  trajectory.validate(n);
  const std::size_t count = static_cast<std::size_t>(n) * n;
  const std::vector<double> unit = image.unit_values();

  FftwBuffer work(count);
  FftwBuffer composite(count);
  Plan forward(fftw_plan_dft_2d(n, n, work.data, work.data, FFTW_FORWARD, FFTW_ESTIMATE));
  Plan inverse(fftw_plan_dft_2d(n, n, composite.data, composite.data, FFTW_BACKWARD, FFTW_ESTIMATE));

  for (const auto& seg : trajectory.segments) {
    const std::vector<double> posed = rotate(unit, n, seg.theta);
    Complex* w = work.complex();
    for (std::size_t i = 0; i < count; ++i) w[i] = Complex(posed[i], 0.0);
    fftw_execute(forward.get());
    for (int r = seg.row_begin; r < seg.row_end; ++r) {
      const int ky = r - n / 2;
      const int row = ((ky % n) + n) % n;
      for (int col = 0; col < n; ++col) {
        const int kx = signed_frequency(col, n);
        const double phase = -2.0 * std::numbers::pi * (kx * seg.dx + ky * seg.dy) / n;
        composite.complex()[static_cast<std::size_t>(row) * n + col] =
            w[static_cast<std::size_t>(row) * n + col] * std::polar(1.0, phase);
      }
    }
  }
  fftw_execute(inverse.get());

  ImageGrid out(n, n, image.range());
  const double lo = image.range().lo;
  const double span = image.range().span();
  auto values = out.values();
  const Complex* c = composite.complex();
  for (std::size_t i = 0; i < count; ++i) {
    const double magnitude = std::clamp(std::abs(c[i]) / static_cast<double>(count), 0.0, 1.0);
    values[i] = static_cast<float>(lo + magnitude * span);
  }
  return out;
}

MotionTrajectory draw_trajectory(double severity, Rng& rng, int rows, const MotionParams& params) {
  if (rows < 2) throw ParameterError("draw_trajectory: need at least two rows");
  if (!(severity >= 0.0 && severity <= 1.0)) throw ParameterError("draw_trajectory: severity must lie in [0, 1]");
  const int extra = static_cast<int>(std::lround((params.max_segments - params.min_segments) * severity));
  int segments = params.min_segments + std::uniform_int_distribution<int>(0, std::max(extra, 0))(rng);
  segments = std::clamp(segments, 1, rows);

  // Distinct cut points in [1, rows - 1].
  std::vector<int> cuts;
  std::vector<int> candidates(static_cast<std::size_t>(rows - 1));
  for (int i = 0; i < rows - 1; ++i) candidates[i] = i + 1;
  for (int i = 0; i < segments - 1; ++i) {
    std::uniform_int_distribution<std::size_t> d(static_cast<std::size_t>(i), candidates.size() - 1);
    std::swap(candidates[i], candidates[d(rng)]);
    cuts.push_back(candidates[i]);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.push_back(rows);

  const double shift = severity * params.max_shift;
  const double rotation = severity * params.max_rotation;
  MotionTrajectory traj;
  int begin = 0;
  for (int end : cuts) {
    MotionSegment s{begin, end, 0.0, 0.0, 0.0};
    s.dx = shift > 0.0 ? uniform(rng, -shift, shift) : 0.0;
    s.dy = shift > 0.0 ? uniform(rng, -shift, shift) : 0.0;
    s.theta = rotation > 0.0 ? uniform(rng, -rotation, rotation) : 0.0;
    traj.segments.push_back(s);
    begin = end;
  }
  const bool keep_centre_still = std::bernoulli_distribution(0.5)(rng);
  if (keep_centre_still) {
    for (auto& s : traj.segments) {
      if (s.row_begin <= rows / 2 && rows / 2 < s.row_end) {
        s.dx = s.dy = s.theta = 0.0;
      }
    }
  }
  return traj;
}

void GateSpec::validate() const {
  if (!(s0 > 0.0 && s0 < 1.0 && s1 > 0.0 && s1 < 1.0)) throw ParameterError("gate bounds must lie in (0, 1)");
  if (!(s0 < s1)) throw ParameterError("gate requires s0 < s1");
  if (max_retries < 1) throw ParameterError("gate max_retries must be >= 1");
}

GeneratedPair generate_pair(const ImageGrid& clean, const GateSpec& gate, std::uint64_t seed,
                            const PairGenerationOptions& options) {
  gate.validate();
  Rng rng(seed);
  double severity = std::clamp(options.initial_severity, 0.0, 1.0);
  double closest = -1.0;
  double closest_distance = 1e300;
  for (int attempt = 1; attempt <= gate.max_retries; ++attempt) {
    MotionTrajectory traj = draw_trajectory(severity, rng, clean.height(), options.motion);
    ImageGrid corrupted = corrupt(clean, traj);
    const double s = ssim(clean, corrupted, options.ssim);
    if (gate.accepts(s)) {
      return GeneratedPair{std::move(corrupted), s, std::move(traj), seed, attempt, severity};
    }
    if (gate_distance(gate, s) < closest_distance) {
      closest_distance = gate_distance(gate, s);
      closest = s;
    }
    if (s >= gate.s1) {
      severity = std::min(1.0, std::max(severity, 1e-3) * options.escalate);
    } else {
      severity *= options.relax;
    }
  }
  throw GateFailure("no corruption within SSIM gate (" + std::to_string(gate.s0) + ", " + std::to_string(gate.s1) +
                        ") after " + std::to_string(gate.max_retries) + " attempts; closest SSIM " +
                        std::to_string(closest),
                    closest);
}

}  // namespace flowi2i
