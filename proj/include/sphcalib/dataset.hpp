#pragma once

// Labeled crop generation from equirectangular panoramas. Every crop has its
// own counter-based random stream keyed by (seed, panorama id, crop index),
// so crops can be generated in any order or in parallel with identical output.

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sphcalib/camera_model.hpp"
#include "sphcalib/errors.hpp"
#include "sphcalib/parallel.hpp"
#include "sphcalib/png_io.hpp"
#include "sphcalib/warp.hpp"

namespace sphcalib::dataset {

// ---------------------------------------------------------------------------
// Random streams

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Counter-based generator: the n-th output is a pure function of (key, n).
/// Distributions are sampled by hand so streams are identical across standard
/// libraries.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : key_(key) {}
  Stream(std::uint64_t seed, std::string_view pano_id, std::uint64_t crop_index)
      : key_(splitmix64(splitmix64(splitmix64(seed) ^ fnv1a(pano_id)) ^ crop_index)) {}

  std::uint64_t next() { return splitmix64(key_ ^ splitmix64(counter_++)); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  /// Uniform on (0, 1).
  double uniform_open() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() {
    // Box-Muller; one output per pair keeps the stream position simple.
    const double u1 = uniform_open(), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double cauchy(double gamma) { return gamma * std::tan(std::numbers::pi * (uniform_open() - 0.5)); }

  /// Triangular distribution on [0, 1] with the given mode (inverse CDF).
  double triangular01(double mode) {
    const double u = uniform();
    if (u < mode) return std::sqrt(u * mode);
    return 1.0 - std::sqrt((1.0 - u) * (1.0 - mode));
  }

  /// Index drawn with probability proportional to weights.
  std::size_t categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      if (u < weights[i]) return i;
      u -= weights[i];
    }
    return weights.size() - 1;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// Configuration

struct AspectRatio {
  std::string name;
  double ratio = 1.0;  // width / height
  double weight = 1.0;
};

struct SamplingConfig {
  // Focal length in mm (35 mm equivalent, 36 mm sensor width): lognormal with
  // the given mean and standard deviation of the variate, truncated.
  double focal_mm_mean = 14.0;
  double focal_mm_sd = 16.0;
  double focal_mm_min = 8.0;
  double focal_mm_max = 400.0;
  double sensor_width_mm = 36.0;

  double horizon_mean = 0.523;
  double horizon_sd = 0.3;

  std::vector<double> roll_gammas{0.001, 0.1};
  std::vector<double> roll_weights{0.33, 0.66};
  double roll_limit = std::numbers::pi / 2.0;

  std::vector<AspectRatio> aspect_ratios{
      {"1:1", 1.0, 0.1}, {"5:4", 1.25, 0.1}, {"4:3", 4.0 / 3.0, 0.6}, {"3:2", 1.5, 0.1}, {"16:9", 16.0 / 9.0, 0.1}};

  std::vector<double> xi_modes{0.03, 0.0};
  std::vector<double> xi_weights{0.8, 0.2};

  double hfov_min = 0.33;
  double hfov_max = 2.6;
  int max_rejections = 1000;

  int crops_per_pano = 7;
  int output_width = 224;
  int output_height = 224;

  // Fractions of panoramas assigned to train / val / test.
  double split_train = 0.90;
  double split_val = 0.01;

  double lognormal_sigma() const {
    const double cv = focal_mm_sd / focal_mm_mean;
    return std::sqrt(std::log1p(cv * cv));
  }
  double lognormal_mu() const {
    const double s = lognormal_sigma();
    return std::log(focal_mm_mean) - 0.5 * s * s;
  }

  void validate() const {
    auto positive_weights = [](const std::vector<double>& w, const char* what) {
      double total = 0.0;
      for (double x : w) {
        if (!(x >= 0.0)) throw Error(ErrorCode::kInvalidArgument, std::string(what) + " weights must be >= 0");
        total += x;
      }
      if (!(total > 0.0)) throw Error(ErrorCode::kInvalidArgument, std::string(what) + " weights sum to zero");
    };
    if (!(focal_mm_mean > 0.0 && focal_mm_sd > 0.0 && focal_mm_min < focal_mm_max && focal_mm_min > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "invalid focal distribution");
    }
    if (!(horizon_sd > 0.0)) throw Error(ErrorCode::kInvalidArgument, "horizon sd must be positive");
    if (roll_gammas.empty() || roll_gammas.size() != roll_weights.size()) {
      throw Error(ErrorCode::kInvalidArgument, "roll mixture needs one weight per component");
    }
    for (double g : roll_gammas) {
      if (!(g > 0.0)) throw Error(ErrorCode::kInvalidArgument, "roll scale must be positive");
    }
    positive_weights(roll_weights, "roll");
    if (xi_modes.empty() || xi_modes.size() != xi_weights.size()) {
      throw Error(ErrorCode::kInvalidArgument, "xi mixture needs one weight per component");
    }
    for (double m : xi_modes) {
      if (!(m >= 0.0 && m <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "xi modes must lie in [0, 1]");
    }
    positive_weights(xi_weights, "xi");
    if (aspect_ratios.empty()) throw Error(ErrorCode::kInvalidArgument, "no aspect ratios configured");
    std::vector<double> aw;
    for (const auto& a : aspect_ratios) {
      if (!(a.ratio > 0.0)) throw Error(ErrorCode::kInvalidArgument, "aspect ratio must be positive");
      aw.push_back(a.weight);
    }
    positive_weights(aw, "aspect");
    if (!(hfov_min > 0.0 && hfov_min < hfov_max && hfov_max < std::numbers::pi)) {
      throw Error(ErrorCode::kInvalidArgument, "invalid hfov range");
    }
    if (crops_per_pano < 1 || output_width < 1 || output_height < 1 || max_rejections < 1) {
      throw Error(ErrorCode::kInvalidArgument, "counts and sizes must be positive");
    }
    if (!(split_train >= 0.0 && split_val >= 0.0 && split_train + split_val <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "invalid split fractions");
    }
  }
};

inline SamplingConfig config_from_json(const nlohmann::json& j) {
  SamplingConfig c;
  try {
    auto opt = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    opt("focal_mm_mean", c.focal_mm_mean);
    opt("focal_mm_sd", c.focal_mm_sd);
    opt("focal_mm_min", c.focal_mm_min);
    opt("focal_mm_max", c.focal_mm_max);
    opt("sensor_width_mm", c.sensor_width_mm);
    opt("horizon_mean", c.horizon_mean);
    opt("horizon_sd", c.horizon_sd);
    opt("roll_gammas", c.roll_gammas);
    opt("roll_weights", c.roll_weights);
    opt("xi_modes", c.xi_modes);
    opt("xi_weights", c.xi_weights);
    opt("hfov_min", c.hfov_min);
    opt("hfov_max", c.hfov_max);
    opt("max_rejections", c.max_rejections);
    opt("crops_per_pano", c.crops_per_pano);
    opt("output_width", c.output_width);
    opt("output_height", c.output_height);
    opt("split_train", c.split_train);
    opt("split_val", c.split_val);
    if (j.contains("aspect_ratios")) {
      c.aspect_ratios.clear();
      for (const auto& a : j.at("aspect_ratios")) {
        c.aspect_ratios.push_back({a.at("name").get<std::string>(), a.at("ratio").get<double>(),
                                   a.at("weight").get<double>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchema, std::string("bad sampling config: ") + e.what());
  }
  c.validate();
  return c;
}

/// Analytic CDF of the configured xi mixture.
inline double xi_mixture_cdf(const SamplingConfig& c, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double total = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < c.xi_modes.size(); ++i) {
    const double m = c.xi_modes[i];
    const double f = x < m ? x * x / m : 1.0 - (1.0 - x) * (1.0 - x) / (1.0 - m);
    acc += c.xi_weights[i] * f;
    total += c.xi_weights[i];
  }
  return acc / total;
}

// ---------------------------------------------------------------------------
// Crop specification

struct CropSpec {
  std::string pano_id;
  std::uint64_t crop_index = 0;
  double yaw_rad = 0.0;
  double pitch_rad = 0.0;
  double roll_rad = 0.0;
  double hfov_rad = 0.0;
  double xi = 0.0;
  std::string aspect_name;
  double aspect_ratio = 1.0;
  int render_width = 0;
  int render_height = 0;
  std::uint64_t seed = 0;

  Intrinsics intrinsics() const {
    return Intrinsics::centered(focal_from_fov(hfov_rad, xi, render_width / 2.0), xi, render_width, render_height);
  }
  Orientation orientation() const { return {pitch_rad, roll_rad}; }
};

struct CropLabel {
  double roll_rad = 0.0;
  double midpoint_units = 0.0;
  double hfov_rad = 0.0;
  double xi = 0.0;
  double focal_px = 0.0;
  double pitch_rad = 0.0;
};

inline CropLabel label_for(const CropSpec& spec) {
  const Intrinsics k = spec.intrinsics();
  return {spec.roll_rad, horizon_midpoint(spec.orientation(), k), spec.hfov_rad, spec.xi, k.focal_px, spec.pitch_rad};
}

/// Render size before the final resize: full output width, height from the
/// aspect ratio.
inline std::pair<int, int> render_size(const SamplingConfig& c, double aspect_ratio) {
  const int w = c.output_width;
  return {w, std::max(1, static_cast<int>(std::lround(w / aspect_ratio)))};
}

/// Draws one crop. Only the offending coordinate is redrawn on rejection
/// (focal for an out-of-range FoV, horizon for an unsolvable pitch), so the
/// other marginals are unaffected.
inline CropSpec sample_crop_spec(std::uint64_t seed, const SamplingConfig& c, std::string_view pano_id,
                                 std::uint64_t crop_index = 0) {
  Stream rng(seed, pano_id, crop_index);
  CropSpec s;
  s.pano_id = std::string(pano_id);
  s.crop_index = crop_index;
  s.seed = seed;
  int rejections = 0;
  auto reject = [&](const char* what) {
    if (++rejections >= c.max_rejections) {
      throw Error(ErrorCode::kSamplingExhausted,
                  fmt::format("{} rejections while sampling {} for {}", rejections, what, pano_id));
    }
  };

  std::vector<double> aspect_weights;
  for (const auto& a : c.aspect_ratios) aspect_weights.push_back(a.weight);
  const auto& aspect = c.aspect_ratios[rng.categorical(aspect_weights)];
  s.aspect_name = aspect.name;
  s.aspect_ratio = aspect.ratio;
  std::tie(s.render_width, s.render_height) = render_size(c, aspect.ratio);
  const double u0 = s.render_width / 2.0;

  s.yaw_rad = 2.0 * std::numbers::pi * rng.uniform();
  s.xi = std::clamp(rng.triangular01(c.xi_modes[rng.categorical(c.xi_weights)]), 0.0, 1.0);

  const double mu = c.lognormal_mu(), sigma = c.lognormal_sigma();
  while (true) {
    const double f_mm = std::exp(mu + sigma * rng.normal());
    if (f_mm < c.focal_mm_min || f_mm > c.focal_mm_max) {
      reject("focal");
      continue;
    }
    const double hfov = effective_hfov(f_mm / c.sensor_width_mm * s.render_width, s.xi, u0);
    if (hfov < c.hfov_min || hfov > c.hfov_max) {
      reject("focal");
      continue;
    }
    s.hfov_rad = hfov;
    break;
  }

  const double gamma = c.roll_gammas[rng.categorical(c.roll_weights)];
  while (true) {
    const double roll = rng.cauchy(gamma);
    if (std::abs(roll) > c.roll_limit) {
      reject("roll");
      continue;
    }
    s.roll_rad = roll;
    break;
  }

  const Intrinsics k = s.intrinsics();
  while (true) {
    const double vm = c.horizon_mean + c.horizon_sd * rng.normal();
    try {
      s.pitch_rad = pitch_from_midpoint(vm, k);
      break;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNoValidPitch) throw;
      reject("horizon");
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Rendering

inline void check_panorama(const Image& pano) {
  if (pano.empty()) throw Error(ErrorCode::kBadPanoramaAspect, "empty panorama");
  const double aspect = static_cast<double>(pano.width) / pano.height;
  if (std::abs(aspect - 2.0) > 0.04) {
    throw Error(ErrorCode::kBadPanoramaAspect,
                fmt::format("panorama is {}x{}, expected a 2:1 equirectangular image", pano.width, pano.height));
  }
}

/// World-to-camera rotation of a crop: roll, pitch, then yaw about the up axis.
inline Eigen::Matrix3d crop_rotation(const CropSpec& s) {
  return rotation_z(s.roll_rad) * rotation_x(s.pitch_rad) * rotation_y(s.yaw_rad);
}

/// Inverse map from crop pixels (continuous coordinates, intrinsics `k`) to
/// continuous equirectangular coordinates of a pano_width x pano_height image.
struct CropSourceMap {
  Eigen::Matrix3d r_transpose;
  Intrinsics k;
  double pano_width = 0.0;
  double pano_height = 0.0;

  CropSourceMap(const CropSpec& s, const Intrinsics& intr, int pw, int ph)
      : r_transpose(crop_rotation(s).transpose()), k(intr), pano_width(pw), pano_height(ph) {}

  std::optional<SourcePoint> operator()(double u, double v) const {
    const Eigen::Vector3d d = r_transpose * backproject({u, v}, k);
    const double lon = std::atan2(d.x(), d.z());
    const double lat = std::asin(std::clamp(-d.y() / d.norm(), -1.0, 1.0));
    return SourcePoint((lon / (2.0 * std::numbers::pi) + 0.5) * pano_width, (0.5 - lat / std::numbers::pi) * pano_height);
  }
};

/// Renders the crop in its own frame (render_width x render_height).
inline Image render_view(const Image& pano, const CropSpec& spec, int threads = 1) {
  check_panorama(pano);
  const CropSourceMap map(spec, spec.intrinsics(), pano.width, pano.height);
  return remap(pano, spec.render_width, spec.render_height, map, BorderMode::kWrapHorizontal, threads);
}

struct RenderedCrop {
  Image image;  // resized to the output size
  CropLabel label;
};

inline RenderedCrop render_crop(const Image& pano, const CropSpec& spec, int output_width, int output_height,
                                int threads = 1) {
  Image view = render_view(pano, spec, threads);
  if (view.width != output_width || view.height != output_height) {
    view = resize(view, output_width, output_height, threads);
  }
  return {std::move(view), label_for(spec)};
}

// ---------------------------------------------------------------------------
// Dataset generation

enum class Split { kTrain, kVal, kTest };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

struct ManifestRecord {
  std::string id;
  std::string file;
  std::string pano_id;
  CropSpec spec;
  CropLabel label;
  Split split = Split::kTrain;
  int width = 0;   // render frame the labels refer to
  int height = 0;
};

/// One JSON object per line; floats with 17 significant digits.
inline std::string manifest_line(const ManifestRecord& r) {
  const nlohmann::json id = r.id, file = r.file, pano = r.pano_id;
  return fmt::format(
      "{{\"id\":{},\"file\":{},\"pano_id\":{},\"pitch_rad\":{:.17g},\"roll_rad\":{:.17g},\"yaw_rad\":{:.17g},"
      "\"hfov_rad\":{:.17g},\"xi\":{:.17g},\"focal_px\":{:.17g},\"midpoint_units\":{:.17g},\"aspect\":{:.17g},"
      "\"seed\":{},\"width\":{},\"height\":{},\"split\":\"{}\"}}",
      id.dump(), file.dump(), pano.dump(), r.label.pitch_rad, r.label.roll_rad, r.spec.yaw_rad, r.label.hfov_rad,
      r.label.xi, r.label.focal_px, r.label.midpoint_units, r.spec.aspect_ratio, r.spec.seed, r.width, r.height,
      to_string(r.split));
}

/// Parsed manifest entry: just what downstream consumers need.
struct ManifestEntry {
  std::string id;
  std::string file;
  std::string pano_id;
  double pitch_rad = 0.0;
  double roll_rad = 0.0;
  double yaw_rad = 0.0;
  double hfov_rad = 0.0;
  double xi = 0.0;
  double focal_px = 0.0;
  double midpoint_units = 0.0;
  double aspect = 1.0;
  std::uint64_t seed = 0;
  int width = 0;
  int height = 0;
  std::string split;

  Intrinsics intrinsics() const { return Intrinsics::centered(focal_px, xi, width, height); }
  Orientation orientation() const { return {pitch_rad, roll_rad}; }
};

inline ManifestEntry parse_manifest_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.file = j.value("file", "");
    e.pano_id = j.value("pano_id", "");
    e.pitch_rad = j.at("pitch_rad").get<double>();
    e.roll_rad = j.at("roll_rad").get<double>();
    e.yaw_rad = j.value("yaw_rad", 0.0);
    e.hfov_rad = j.at("hfov_rad").get<double>();
    e.xi = j.at("xi").get<double>();
    e.focal_px = j.at("focal_px").get<double>();
    e.midpoint_units = j.at("midpoint_units").get<double>();
    e.aspect = j.value("aspect", 1.0);
    e.seed = j.value("seed", std::uint64_t{0});
    // Records from other producers may omit the frame size; recover it from
    // the focal, FoV and aspect.
    if (j.contains("width") && j.contains("height")) {
      e.width = j.at("width").get<int>();
      e.height = j.at("height").get<int>();
    } else {
      const double u0 = e.focal_px / (focal_from_fov(e.hfov_rad, e.xi, 1.0));
      e.width = static_cast<int>(std::lround(2.0 * u0));
      e.height = static_cast<int>(std::lround(e.width / e.aspect));
    }
    e.split = j.value("split", "");
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::kSchema, std::string("bad manifest record: ") + ex.what());
  }
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_manifest_line(line));
  }
  return out;
}

/// Assigns whole panoramas to splits. Panoramas are ranked by a seeded hash
/// and cut at the configured fractions, so each panorama lands in exactly one
/// split and the proportions are exact up to rounding.
inline std::vector<Split> assign_splits(const std::vector<std::string>& pano_ids, std::uint64_t seed,
                                        const SamplingConfig& c) {
  const std::size_t n = pano_ids.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  auto key = [&](std::size_t i) { return splitmix64(splitmix64(seed ^ 0x5eedULL) ^ fnv1a(pano_ids[i])); };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ka = key(a), kb = key(b);
    return ka != kb ? ka < kb : pano_ids[a] < pano_ids[b];
  });
  const auto n_train = static_cast<std::size_t>(std::llround(c.split_train * n));
  const auto n_val = std::min(n - std::min(n, n_train), static_cast<std::size_t>(std::llround(c.split_val * n)));
  std::vector<Split> out(n, Split::kTest);
  for (std::size_t r = 0; r < n; ++r) {
    out[order[r]] = r < n_train ? Split::kTrain : (r < n_train + n_val ? Split::kVal : Split::kTest);
  }
  return out;
}

inline std::vector<std::filesystem::path> list_panoramas(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::kIo, dir.string() + " is not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct GenerateOptions {
  std::size_t count = 0;
  std::uint64_t seed = 0;
  int threads = 0;
  int png_bit_depth = 8;
};

struct GenerateResult {
  std::vector<ManifestRecord> records;
  std::size_t rendered = 0;  // crops written in this run
  std::size_t reused = 0;    // crops already present on disk
  std::filesystem::path manifest_path;
};

/// Writes `count` crops under out_dir/images and out_dir/manifest.jsonl.
/// Crop i comes from panorama (i / crops_per_pano) mod n_panos; crop files
/// that already exist are kept, so an interrupted run can be resumed.
inline GenerateResult generate_dataset(const std::filesystem::path& pano_dir, const std::filesystem::path& out_dir,
                                       const SamplingConfig& config, const GenerateOptions& opt) {
  config.validate();
  const auto panos = list_panoramas(pano_dir);
  if (panos.empty()) throw Error(ErrorCode::kIo, "no PNG panoramas in " + pano_dir.string());
  std::vector<std::string> ids;
  for (const auto& p : panos) ids.push_back(p.stem().string());
  const auto splits = assign_splits(ids, opt.seed, config);

  GenerateResult result;
  std::filesystem::create_directories(out_dir);
  if (opt.count > 0) std::filesystem::create_directories(out_dir / "images");
  result.manifest_path = out_dir / "manifest.jsonl";

  const std::size_t per = static_cast<std::size_t>(config.crops_per_pano);
  const std::size_t n = panos.size();
  result.records.resize(opt.count);
  std::vector<std::vector<std::size_t>> by_pano(n);
  for (std::size_t i = 0; i < opt.count; ++i) {
    const std::size_t round = i / (per * n);
    const std::size_t pano = (i / per) % n;
    const std::uint64_t crop_index = round * per + i % per;
    auto& r = result.records[i];
    r.pano_id = ids[pano];
    r.id = fmt::format("{}_{:04d}", ids[pano], crop_index);
    r.file = "images/" + r.id + ".png";
    r.spec = sample_crop_spec(opt.seed, config, ids[pano], crop_index);
    r.label = label_for(r.spec);
    r.split = splits[pano];
    r.width = r.spec.render_width;
    r.height = r.spec.render_height;
    by_pano[pano].push_back(i);
  }

  const int threads = resolve_threads(opt.threads);
  for (std::size_t p = 0; p < n; ++p) {
    std::vector<std::size_t> todo;
    for (std::size_t i : by_pano[p]) {
      if (std::filesystem::exists(out_dir / result.records[i].file)) {
        ++result.reused;
      } else {
        todo.push_back(i);
      }
    }
    if (todo.empty()) continue;
    const Image pano = read_png(panos[p]);
    check_panorama(pano);
    // Few crops per panorama: parallelize inside each crop instead.
    const int outer = static_cast<int>(std::min<std::size_t>(todo.size(), static_cast<std::size_t>(threads)));
    const int inner = std::max(1, threads / std::max(1, outer));
    parallel_for_chunks(todo.size(), outer, [&](std::size_t begin, std::size_t end) {
      for (std::size_t t = begin; t < end; ++t) {
        const auto& r = result.records[todo[t]];
        const auto crop = render_crop(pano, r.spec, config.output_width, config.output_height, inner);
        // Write to a temporary name first so a crash never leaves a truncated
        // file that a resumed run would accept.
        const auto final_path = out_dir / r.file;
        auto tmp = final_path;
        tmp += ".tmp";
        write_png(tmp, crop.image, opt.png_bit_depth);
        std::filesystem::rename(tmp, final_path);
      }
    });
    result.rendered += todo.size();
  }

  const auto tmp_manifest = out_dir / "manifest.jsonl.tmp";
  {
    std::ofstream out(tmp_manifest, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp_manifest.string());
    for (const auto& r : result.records) out << manifest_line(r) << '\n';
    if (!out) throw Error(ErrorCode::kIo, "failed writing " + tmp_manifest.string());
  }
  std::filesystem::rename(tmp_manifest, result.manifest_path);
  return result;
}

}  // namespace sphcalib::dataset
