#pragma once

// Human-perceptual error measure. Judgments ("which of two insertions looks
// right") are binned on a 7x7 grid over (ground-truth value, signed error);
// the fitted surface gives the probability that a human detects the error,
// from 0.5 (indistinguishable) to 1.0 (always detected).

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sphcalib/errors.hpp"

namespace sphcalib::perceptual {

enum class Parameter { kPitch, kRoll, kHfov, kXi };

inline std::string_view to_string(Parameter p) {
  switch (p) {
    case Parameter::kPitch: return "pitch";
    case Parameter::kRoll: return "roll";
    case Parameter::kHfov: return "hfov";
    case Parameter::kXi: return "xi";
  }
  return "?";
}

inline Parameter parameter_from_string(std::string_view s) {
  if (s == "pitch") return Parameter::kPitch;
  if (s == "roll") return Parameter::kRoll;
  if (s == "hfov") return Parameter::kHfov;
  if (s == "xi") return Parameter::kXi;
  throw Error(ErrorCode::kSchema, "unknown perceptual parameter '" + std::string(s) + "'");
}

/// Pitch, roll and hfov are angles (radians in the library); xi is unitless.
inline bool is_angular(Parameter p) { return p != Parameter::kXi; }

/// Angles in radians. `rate` is the fraction of `count` judgments that
/// picked the ground-truth image (a single judgment is rate 0 or 1, count 1).
struct JudgmentRecord {
  Parameter parameter = Parameter::kPitch;
  double gt_value = 0.0;
  double error = 0.0;
  double rate = 0.0;
  int count = 1;
  std::string image_id;
};

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

constexpr int kGridSize = 7;

template <typename T>
using Grid = std::array<std::array<T, kGridSize>, kGridSize>;

/// Rates indexed [value_bin][error_bin]. Masked cells carry no rate.
struct PerceptualSurface {
  Parameter parameter = Parameter::kPitch;
  std::array<double, kGridSize + 1> value_edges{};
  std::array<double, kGridSize + 1> error_edges{};
  Grid<double> rates{};
  Grid<bool> valid{};
  Grid<int> counts{};

  double value_center(int i) const { return 0.5 * (value_edges[i] + value_edges[i + 1]); }
  double error_center(int j) const { return 0.5 * (error_edges[j] + error_edges[j + 1]); }

  bool any_valid() const {
    for (const auto& row : valid) {
      if (std::any_of(row.begin(), row.end(), [](bool b) { return b; })) return true;
    }
    return false;
  }
};

namespace detail {

inline std::array<double, kGridSize + 1> uniform_edges(Range r) {
  if (!(r.hi > r.lo)) throw Error(ErrorCode::kInvalidArgument, "empty surface range");
  std::array<double, kGridSize + 1> e{};
  for (int i = 0; i <= kGridSize; ++i) e[i] = r.lo + (r.hi - r.lo) * i / kGridSize;
  e[kGridSize] = r.hi;
  return e;
}

/// Bin of x over edges, half-open with the last bin closed; nullopt outside.
template <std::size_t N>
std::optional<int> bin_of(const std::array<double, N>& edges, double x) {
  if (!(x >= edges.front() && x <= edges.back())) return std::nullopt;
  if (x == edges.back()) return static_cast<int>(N) - 2;
  const auto it = std::upper_bound(edges.begin(), edges.end(), x);
  return static_cast<int>(it - edges.begin()) - 1;
}

/// Quantile with linear interpolation between order statistics of sorted data.
inline double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

/// Approximate axis ranges for each parameter, in library units (radians for
/// angles). Configuration, not data: override them to match a study.
struct DefaultRanges {
  Range value;
  Range error;
};

inline DefaultRanges default_ranges(Parameter p) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  switch (p) {
    case Parameter::kPitch: return {{-30 * kDeg, 30 * kDeg}, {-30 * kDeg, 30 * kDeg}};
    case Parameter::kRoll: return {{-30 * kDeg, 30 * kDeg}, {-20 * kDeg, 20 * kDeg}};
    case Parameter::kHfov: return {{20 * kDeg, 120 * kDeg}, {-55 * kDeg, 55 * kDeg}};
    case Parameter::kXi: return {{0.0, 1.0}, {-1.0, 1.0}};
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown parameter");
}

/// Bins the records of one parameter on the 7x7 grid. Cells backed by fewer
/// than min_count judgments are masked; records outside the ranges are ignored.
inline PerceptualSurface fit_surface(const std::vector<JudgmentRecord>& records, Parameter parameter,
                                     Range value_range, Range error_range, int min_count = 5) {
  PerceptualSurface s;
  s.parameter = parameter;
  s.value_edges = detail::uniform_edges(value_range);
  s.error_edges = detail::uniform_edges(error_range);
  Grid<double> hits{};
  bool any = false;
  for (const auto& r : records) {
    if (r.parameter != parameter) continue;
    any = true;
    const auto vi = detail::bin_of(s.value_edges, r.gt_value);
    const auto ei = detail::bin_of(s.error_edges, r.error);
    if (!vi || !ei) continue;
    hits[*vi][*ei] += r.rate * r.count;
    s.counts[*vi][*ei] += r.count;
  }
  if (!any) throw Error(ErrorCode::kNoData, "no records for parameter " + std::string(to_string(parameter)));
  for (int i = 0; i < kGridSize; ++i) {
    for (int j = 0; j < kGridSize; ++j) {
      s.valid[i][j] = s.counts[i][j] >= std::max(1, min_count);
      s.rates[i][j] = s.valid[i][j] ? hits[i][j] / s.counts[i][j] : 0.0;
    }
  }
  if (!s.any_valid()) throw Error(ErrorCode::kNoData, "every cell of the surface is masked");
  return s;
}

struct Detectability {
  double value = 0.0;
  bool degraded = false;  // answered from the nearest unmasked cell
};

/// Piecewise-bilinear interpolation between cell centers. Exact at unmasked
/// centers, clamped outside the outermost centers, and renormalized over the
/// unmasked corners when some corners are masked.
inline Detectability evaluate(const PerceptualSurface& s, double gt_value, double error) {
  if (!s.any_valid()) throw Error(ErrorCode::kNoData, "every cell of the surface is masked");
  auto locate = [](double q, double c0, double step) {
    const double t = std::clamp((q - c0) / step, 0.0, static_cast<double>(kGridSize - 1));
    const int i = std::min(static_cast<int>(std::floor(t)), kGridSize - 2);
    return std::pair{i, t - i};
  };
  const double vstep = s.value_center(1) - s.value_center(0);
  const double estep = s.error_center(1) - s.error_center(0);
  const auto [i, a] = locate(gt_value, s.value_center(0), vstep);
  const auto [j, b] = locate(error, s.error_center(0), estep);

  double acc = 0.0, wsum = 0.0;
  const std::array<std::array<double, 2>, 2> w{{{(1 - a) * (1 - b), (1 - a) * b}, {a * (1 - b), a * b}}};
  for (int di = 0; di < 2; ++di) {
    for (int dj = 0; dj < 2; ++dj) {
      if (!s.valid[i + di][j + dj] || w[di][dj] == 0.0) continue;
      acc += w[di][dj] * s.rates[i + di][j + dj];
      wsum += w[di][dj];
    }
  }
  if (wsum > 0.0) return {acc / wsum, false};

  // Fall back to the nearest unmasked center, in cell units; ties go to the
  // lowest (value, error) index.
  const double ti = i + a, tj = j + b;
  double best_d = std::numeric_limits<double>::infinity();
  double best_rate = 0.0;
  for (int ci = 0; ci < kGridSize; ++ci) {
    for (int cj = 0; cj < kGridSize; ++cj) {
      if (!s.valid[ci][cj]) continue;
      const double d = (ci - ti) * (ci - ti) + (cj - tj) * (cj - tj);
      if (d < best_d) {
        best_d = d;
        best_rate = s.rates[ci][cj];
      }
    }
  }
  return {best_rate, true};
}

struct QuartileSummary {
  std::size_t count = 0;
  double median = std::numeric_limits<double>::quiet_NaN();
  double q1 = std::numeric_limits<double>::quiet_NaN();
  double q3 = std::numeric_limits<double>::quiet_NaN();
  double mean = std::numeric_limits<double>::quiet_NaN();
};

inline QuartileSummary summarize(std::vector<double> values) {
  QuartileSummary out;
  out.count = values.size();
  if (values.empty()) return out;
  std::sort(values.begin(), values.end());
  out.median = detail::quantile_sorted(values, 0.5);
  out.q1 = detail::quantile_sorted(values, 0.25);
  out.q3 = detail::quantile_sorted(values, 0.75);
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  return out;
}

struct MarginalBin {
  double error_lo = 0.0;
  double error_hi = 0.0;
  QuartileSummary per_image;  // statistics over per-image detection rates
};

/// Sensitivity as a function of error alone: per error bin, the per-image
/// rate (judgments pooled by image id) summarized by median and quartiles.
inline std::vector<MarginalBin> marginal_sensitivity(const std::vector<JudgmentRecord>& records,
                                                     Parameter parameter, Range error_range, int n_bins) {
  if (n_bins < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one error bin");
  if (!(error_range.hi > error_range.lo)) throw Error(ErrorCode::kInvalidArgument, "empty error range");
  const double width = (error_range.hi - error_range.lo) / n_bins;
  // (bin, image) -> (hits, count)
  std::map<std::pair<int, std::string>, std::pair<double, double>> per_image;
  for (const auto& r : records) {
    if (r.parameter != parameter) continue;
    if (!(r.error >= error_range.lo && r.error <= error_range.hi)) continue;
    const int bin = std::min(static_cast<int>((r.error - error_range.lo) / width), n_bins - 1);
    auto& [hits, count] = per_image[{bin, r.image_id}];
    hits += r.rate * r.count;
    count += r.count;
  }
  std::vector<std::vector<double>> rates(static_cast<std::size_t>(n_bins));
  for (const auto& [key, hc] : per_image) rates[key.first].push_back(hc.first / hc.second);
  std::vector<MarginalBin> out;
  for (int b = 0; b < n_bins; ++b) {
    out.push_back({error_range.lo + b * width,
                   b == n_bins - 1 ? error_range.hi : error_range.lo + (b + 1) * width,
                   summarize(std::move(rates[b]))});
  }
  return out;
}

struct Estimate {
  Parameter parameter = Parameter::kPitch;
  double gt_value = 0.0;
  double estimate = 0.0;
};

/// Perceptual score of a method: every estimate's error is looked up on the
/// surface of its parameter. Lower is better; 0.5 is indistinguishable.
inline std::map<Parameter, QuartileSummary> score_method(const std::map<Parameter, PerceptualSurface>& surfaces,
                                                         const std::vector<Estimate>& estimates) {
  std::map<Parameter, std::vector<double>> values;
  for (const auto& e : estimates) {
    const auto it = surfaces.find(e.parameter);
    if (it == surfaces.end()) {
      throw Error(ErrorCode::kMissingSurface, "no surface fitted for " + std::string(to_string(e.parameter)));
    }
    values[e.parameter].push_back(evaluate(it->second, e.gt_value, e.estimate - e.gt_value).value);
  }
  std::map<Parameter, QuartileSummary> out;
  for (auto& [p, v] : values) out[p] = summarize(std::move(v));
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const PerceptualSurface& s) {
  nlohmann::json rates = nlohmann::json::array(), mask = nlohmann::json::array(),
                 counts = nlohmann::json::array();
  for (int i = 0; i < kGridSize; ++i) {
    nlohmann::json rr = nlohmann::json::array(), mr = nlohmann::json::array(), cr = nlohmann::json::array();
    for (int j = 0; j < kGridSize; ++j) {
      rr.push_back(s.valid[i][j] ? nlohmann::json(s.rates[i][j]) : nlohmann::json(nullptr));
      mr.push_back(!s.valid[i][j]);
      cr.push_back(s.counts[i][j]);
    }
    rates.push_back(rr);
    mask.push_back(mr);
    counts.push_back(cr);
  }
  return {{"parameter", std::string(to_string(s.parameter))},
          {"value_edges", s.value_edges},
          {"error_edges", s.error_edges},
          {"rates", rates},
          {"mask", mask},
          {"counts", counts}};
}

inline PerceptualSurface surface_from_json(const nlohmann::json& j) {
  try {
    PerceptualSurface s;
    s.parameter = parameter_from_string(j.at("parameter").get<std::string>());
    const auto ve = j.at("value_edges").get<std::vector<double>>();
    const auto ee = j.at("error_edges").get<std::vector<double>>();
    if (ve.size() != kGridSize + 1 || ee.size() != kGridSize + 1) {
      throw Error(ErrorCode::kSchema, "surface edges must have 8 entries");
    }
    std::copy(ve.begin(), ve.end(), s.value_edges.begin());
    std::copy(ee.begin(), ee.end(), s.error_edges.begin());
    const auto& rates = j.at("rates");
    const auto& mask = j.at("mask");
    for (int i = 0; i < kGridSize; ++i) {
      for (int k = 0; k < kGridSize; ++k) {
        s.valid[i][k] = !mask.at(i).at(k).get<bool>();
        s.rates[i][k] = s.valid[i][k] ? rates.at(i).at(k).get<double>() : 0.0;
        s.counts[i][k] = j.contains("counts") ? j["counts"].at(i).at(k).get<int>() : 0;
      }
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchema, std::string("bad surface: ") + e.what());
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, std::size_t line_no) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::kSchema, "line " + std::to_string(line_no) + ": not a number '" + s + "'");
  }
  return v;
}

template <typename RowFn>
void read_csv(std::istream& in, const std::vector<std::string>& required, RowFn&& row_fn) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    header = split_csv_line(line);
    break;
  }
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const auto& name : required) {
    if (!col.count(name)) throw Error(ErrorCode::kSchema, "CSV header lacks column '" + name + "'");
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::kSchema, "line " + std::to_string(line_no) + ": expected " +
                                          std::to_string(header.size()) + " fields");
    }
    row_fn([&](const std::string& name) -> const std::string& { return fields[col.at(name)]; }, line_no);
  }
}

}  // namespace detail

/// Judgment CSV: header `parameter,gt_value,error,chose_gt,image_id`; an
/// optional `count` column turns chose_gt into an aggregated rate.
inline std::vector<JudgmentRecord> read_judgments_csv(std::istream& in) {
  std::vector<JudgmentRecord> out;
  detail::read_csv(in, {"parameter", "gt_value", "error", "chose_gt", "image_id"},
                   [&](auto get, std::size_t line_no) {
                     JudgmentRecord r;
                     r.parameter = parameter_from_string(get("parameter"));
                     r.gt_value = detail::parse_double(get("gt_value"), line_no);
                     r.error = detail::parse_double(get("error"), line_no);
                     const std::string& chose = get("chose_gt");
                     if (chose == "true" || chose == "True") {
                       r.rate = 1.0;
                     } else if (chose == "false" || chose == "False") {
                       r.rate = 0.0;
                     } else {
                       r.rate = detail::parse_double(chose, line_no);
                     }
                     if (!(r.rate >= 0.0 && r.rate <= 1.0)) {
                       throw Error(ErrorCode::kSchema, "line " + std::to_string(line_no) + ": chose_gt outside [0, 1]");
                     }
                     r.image_id = get("image_id");
                     out.push_back(std::move(r));
                   });
  return out;
}

/// Estimate CSV: header `parameter,gt_value,estimate`.
inline std::vector<Estimate> read_estimates_csv(std::istream& in) {
  std::vector<Estimate> out;
  detail::read_csv(in, {"parameter", "gt_value", "estimate"}, [&](auto get, std::size_t line_no) {
    out.push_back({parameter_from_string(get("parameter")), detail::parse_double(get("gt_value"), line_no),
                   detail::parse_double(get("estimate"), line_no)});
  });
  return out;
}

}  // namespace sphcalib::perceptual
