#pragma once

// Classification-bin codec for the four calibration heads (roll, horizon
// midpoint, horizontal FoV, distortion): target distributions for training,
// decoding of head outputs, and the KL training loss.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "sphcalib/errors.hpp"

namespace sphcalib {

enum class Parameter { kRoll, kMidpoint, kHfov, kXi };

inline std::string_view to_string(Parameter p) {
  switch (p) {
    case Parameter::kRoll: return "roll";
    case Parameter::kMidpoint: return "midpoint";
    case Parameter::kHfov: return "hfov";
    case Parameter::kXi: return "xi";
  }
  return "?";
}

inline Parameter parameter_from_string(std::string_view s) {
  if (s == "roll") return Parameter::kRoll;
  if (s == "midpoint") return Parameter::kMidpoint;
  if (s == "hfov") return Parameter::kHfov;
  if (s == "xi") return Parameter::kXi;
  throw Error(ErrorCode::kSchema, "unknown parameter '" + std::string(s) + "'");
}

/// Bin layout for one head. Bins are half-open [e_i, e_{i+1}) except the last,
/// which is closed.
class BinSpec {
 public:
  BinSpec(Parameter parameter, std::vector<double> edges)
      : parameter_(parameter), edges_(std::move(edges)) {
    if (edges_.size() < 2) throw Error(ErrorCode::kInvalidArgument, "a bin spec needs at least one bin");
    for (std::size_t i = 1; i < edges_.size(); ++i) {
      if (!(edges_[i] > edges_[i - 1])) {
        throw Error(ErrorCode::kInvalidArgument, "bin edges must be strictly increasing");
      }
    }
  }

  Parameter parameter() const { return parameter_; }
  const std::vector<double>& edges() const { return edges_; }
  std::size_t size() const { return edges_.size() - 1; }
  double lo() const { return edges_.front(); }
  double hi() const { return edges_.back(); }
  double center(std::size_t i) const { return 0.5 * (edges_[i] + edges_[i + 1]); }
  double width(std::size_t i) const { return edges_[i + 1] - edges_[i]; }

  /// Index of the bin holding `value`; values outside the range land in the
  /// first or last bin.
  std::size_t bin_index(double value) const {
    if (!(value > lo())) return 0;
    if (value >= hi()) return size() - 1;
    const auto it = std::upper_bound(edges_.begin(), edges_.end(), value);
    return static_cast<std::size_t>(it - edges_.begin()) - 1;
  }

  bool contains(double value) const { return value >= lo() && value <= hi(); }

  friend bool operator==(const BinSpec&, const BinSpec&) = default;

 private:
  Parameter parameter_;
  std::vector<double> edges_;
};

inline BinSpec uniform_bins(Parameter parameter, double lo, double hi, std::size_t count) {
  if (count == 0 || !(hi > lo)) throw Error(ErrorCode::kInvalidArgument, "invalid uniform bin layout");
  std::vector<double> edges(count + 1);
  for (std::size_t i = 0; i <= count; ++i) {
    edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count);
  }
  edges.back() = hi;
  return BinSpec(parameter, std::move(edges));
}

/// Roll bins that are narrow around zero: the bin starting at edge e has
/// width a - b * exp(-2 e^2). Built outward from 0 up to pi/2 (last edge
/// clamped) and mirrored, so the layout is exactly symmetric.
inline BinSpec construct_roll_bins(double a = 0.044, double b = 0.04) {
  if (!(a > b && b > 0.0)) throw Error(ErrorCode::kInvalidArgument, "roll bins need a > b > 0");
  constexpr double kHalfPi = std::numbers::pi / 2.0;
  std::vector<double> positive{0.0};
  while (true) {
    const double e = positive.back();
    const double next = e + (a - b * std::exp(-2.0 * e * e));
    if (next >= kHalfPi) {
      positive.push_back(kHalfPi);
      break;
    }
    positive.push_back(next);
  }
  std::vector<double> edges;
  edges.reserve(2 * positive.size() - 1);
  for (auto it = positive.rbegin(); it != positive.rend(); ++it) edges.push_back(-*it);
  edges.back() = 0.0;  // -0.0 -> 0.0
  edges.insert(edges.end(), positive.begin() + 1, positive.end());
  return BinSpec(Parameter::kRoll, std::move(edges));
}

/// The four network heads: 256 uniform bins for hfov on [0.33, 2.6] rad, xi
/// on [0, 1] and midpoint on [-1.6, 1.6]; non-uniform roll on [-pi/2, pi/2].
inline BinSpec default_bins(Parameter parameter) {
  switch (parameter) {
    case Parameter::kRoll: return construct_roll_bins();
    case Parameter::kMidpoint: return uniform_bins(Parameter::kMidpoint, -1.6, 1.6, 256);
    case Parameter::kHfov: return uniform_bins(Parameter::kHfov, 0.33, 2.6, 256);
    case Parameter::kXi: return uniform_bins(Parameter::kXi, 0.0, 1.0, 256);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown parameter");
}

inline std::vector<BinSpec> default_bin_set() {
  return {default_bins(Parameter::kRoll), default_bins(Parameter::kMidpoint),
          default_bins(Parameter::kHfov), default_bins(Parameter::kXi)};
}

struct BinDistribution {
  std::vector<double> probs;

  double sum() const { return std::accumulate(probs.begin(), probs.end(), 0.0); }

  void validate(const BinSpec& spec) const {
    if (probs.size() != spec.size()) throw Error(ErrorCode::kInvalidArgument, "distribution/bin size mismatch");
    for (double p : probs) {
      if (!(p >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "negative probability");
    }
    if (std::abs(sum() - 1.0) > 1e-9) throw Error(ErrorCode::kInvalidArgument, "probabilities must sum to 1");
  }
};

struct Encoded {
  BinDistribution dist;
  bool clamped = false;  // value was outside the spec range
};

/// Width of the bin holding `value`, the default smoothing scale.
inline double default_sigma(const BinSpec& spec, double value) { return spec.width(spec.bin_index(value)); }

/// sigma == 0 gives a one-hot target; otherwise a Gaussian of std-dev sigma
/// (parameter units) centered on the containing bin's center, evaluated at
/// every bin center and renormalized.
inline Encoded encode(double value, const BinSpec& spec, double smoothing_sigma) {
  if (!std::isfinite(value)) throw Error(ErrorCode::kInvalidArgument, "cannot encode a non-finite value");
  if (smoothing_sigma < 0.0) throw Error(ErrorCode::kInvalidArgument, "smoothing sigma must be >= 0");
  Encoded out;
  out.clamped = !spec.contains(value);
  const std::size_t hit = spec.bin_index(value);
  out.dist.probs.assign(spec.size(), 0.0);
  if (smoothing_sigma == 0.0) {
    out.dist.probs[hit] = 1.0;
    return out;
  }
  const double mu = spec.center(hit);
  const double inv = 1.0 / (2.0 * smoothing_sigma * smoothing_sigma);
  double total = 0.0;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const double d = spec.center(i) - mu;
    out.dist.probs[i] = std::exp(-d * d * inv);
    total += out.dist.probs[i];
  }
  for (double& p : out.dist.probs) p /= total;
  return out;
}

enum class DecodeMode { kArgmaxCenter, kExpectation };

inline double decode(const BinDistribution& dist, const BinSpec& spec, DecodeMode mode) {
  if (dist.probs.size() != spec.size()) throw Error(ErrorCode::kInvalidArgument, "distribution/bin size mismatch");
  if (mode == DecodeMode::kArgmaxCenter) {
    // max_element returns the first maximum, i.e. ties go to the lower bin.
    const auto it = std::max_element(dist.probs.begin(), dist.probs.end());
    return spec.center(static_cast<std::size_t>(it - dist.probs.begin()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < spec.size(); ++i) acc += dist.probs[i] * spec.center(i);
  return acc;
}

/// KL(target || predicted) with 0 log 0 = 0 and predicted floored at 1e-12
/// (never above the target itself, so KL(p || p) is exactly 0).
inline double kl_loss(const BinDistribution& target, const BinDistribution& predicted) {
  if (target.probs.size() != predicted.probs.size()) {
    throw Error(ErrorCode::kInvalidArgument, "distribution sizes differ");
  }
  constexpr double kFloor = 1e-12;
  double loss = 0.0;
  for (std::size_t i = 0; i < target.probs.size(); ++i) {
    const double t = target.probs[i];
    if (t <= 0.0) continue;
    loss += t * std::log(t / std::max(predicted.probs[i], std::min(t, kFloor)));
  }
  return loss;
}

inline nlohmann::json to_json(const BinSpec& spec) {
  return {{"parameter", std::string(to_string(spec.parameter()))}, {"edges", spec.edges()}};
}

inline BinSpec bin_spec_from_json(const nlohmann::json& j) {
  try {
    return BinSpec(parameter_from_string(j.at("parameter").get<std::string>()),
                   j.at("edges").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchema, std::string("bad bin spec: ") + e.what());
  }
}

inline nlohmann::json to_json(const std::vector<BinSpec>& specs) {
  nlohmann::json heads = nlohmann::json::array();
  for (const auto& s : specs) heads.push_back(to_json(s));
  return {{"heads", heads}};
}

inline std::vector<BinSpec> bin_set_from_json(const nlohmann::json& j) {
  std::vector<BinSpec> out;
  try {
    for (const auto& h : j.at("heads")) out.push_back(bin_spec_from_json(h));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchema, std::string("bad bin set: ") + e.what());
  }
  return out;
}

}  // namespace sphcalib
