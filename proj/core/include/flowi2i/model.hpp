#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "flowi2i/flow.hpp"
#include "flowi2i/grid.hpp"

namespace flowi2i {

/// Conditioning-drop rule used during training (and the matching
/// unconditional branch at inference).
enum class Variant {
  Primary,  // drop y only; control stays active
  Bis,      // drop y and control jointly
};

std::string to_string(Variant v);
Variant parse_variant(std::string_view s);

/// The (y, control) pair fed to the velocity network. Both carry the encoded
/// source latent when present.
struct ConditioningBundle {
  std::optional<LatentGrid> y;        // nullopt is the ZERO sentinel
  std::optional<LatentGrid> control;  // nullopt is the ABSENT sentinel

  static ConditioningBundle from_source(const LatentGrid& source) { return {source, source}; }

  bool y_is_zero() const noexcept { return !y.has_value(); }
  bool control_absent() const noexcept { return !control.has_value(); }
};

/// Anything that maps (x_t, t, conditioning) to a velocity of x_t's shape.
class VelocityModel {
 public:
  virtual ~VelocityModel() = default;
  virtual LatentGrid velocity(const LatentGrid& x_t, FlowTimestep t, const ConditioningBundle& bundle) const = 0;
  virtual Variant variant() const = 0;
};

/// One Bernoulli(p_drop) draw. PRIMARY zeroes y and keeps control; BIS zeroes
/// y and removes control. `dropped` reports the draw.
ConditioningBundle apply_condition_drop(const ConditioningBundle& bundle, double p_drop, Variant variant,
                                        Rng& rng, bool* dropped = nullptr);

}  // namespace flowi2i
