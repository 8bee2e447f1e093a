#pragma once

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sphcalib/camera_model.hpp"
#include "sphcalib/dataset.hpp"
#include "sphcalib/errors.hpp"
#include "sphcalib/warp.hpp"

namespace sphcalib {

namespace detail {

inline double point_segment_distance(double px, double py, const PixelPoint& a, const PixelPoint& b) {
  const double dx = b.u - a.u, dy = b.v - a.v;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - a.u) * dx + (py - a.v) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.u + t * dx - px, ey = a.v + t * dy - py;
  return std::sqrt(ex * ex + ey * ey);
}

}  // namespace detail

/// Overlays the imaged horizon as an anti-aliased polyline of the given
/// thickness (pixels). Pixel coverage falls off linearly over the last half
/// pixel, so nothing farther than thickness / 2 + 0.5 from the curve changes.
inline Image draw_horizon(const Image& img, const Orientation& o, const Intrinsics& k,
                          const std::array<float, 3>& color, double thickness = 2.0, int n_samples = 4096) {
  if (!(thickness > 0.0)) throw Error(ErrorCode::kInvalidArgument, "thickness must be positive");
  const auto curve = horizon_curve(o, k, n_samples);
  const double reach = thickness / 2.0 + 0.5;
  // Consecutive samples farther apart than this straddle a point where the
  // curve leaves the model's forward image; they are not joined.
  const double max_segment = 4.0 * (img.width + img.height);

  std::vector<float> coverage(static_cast<std::size_t>(img.width) * img.height, 0.0f);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const PixelPoint& a = curve[i - 1];
    const PixelPoint& b = curve[i];
    if (std::hypot(b.u - a.u, b.v - a.v) > max_segment) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.u, b.u) - reach)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(std::max(a.u, b.u) + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.v, b.v) - reach)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(std::max(a.v, b.v) + reach)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double d = detail::point_segment_distance(x + 0.5, y + 0.5, a, b);
        const auto c = static_cast<float>(std::clamp(reach - d, 0.0, 1.0));
        float& slot = coverage[static_cast<std::size_t>(y) * img.width + x];
        slot = std::max(slot, c);
      }
    }
  }

  Image out = img;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const float a = coverage[static_cast<std::size_t>(y) * img.width + x];
      if (a == 0.0f) continue;
      for (int c = 0; c < img.channels; ++c) {
        const float target = img.channels == 1 ? (color[0] + color[1] + color[2]) / 3.0f : color[c];
        out.at(x, y, c) = (1.0f - a) * img.at(x, y, c) + a * target;
      }
    }
  }
  return out;
}

/// Horizon feature of an image: where the horizon crosses the left and right
/// borders, in normalized units (top = +1).
struct HorizonFeature {
  double v_left = 0.0;
  double v_right = 0.0;
};

inline HorizonFeature horizon_feature(const Orientation& o, const Intrinsics& k) {
  const auto [l, r] = horizon_endpoints(o, k);
  return {l, r};
}

struct IndexEntry {
  std::string id;
  HorizonFeature feature;
};

struct Match {
  std::string id;
  double distance = 0.0;
};

/// Immutable after construction; entries are kept sorted by id so the index
/// does not depend on insertion order.
class RetrievalIndex {
 public:
  RetrievalIndex() = default;
  explicit RetrievalIndex(std::vector<IndexEntry> entries) : entries_(std::move(entries)) {
    std::sort(entries_.begin(), entries_.end(), [](const IndexEntry& a, const IndexEntry& b) { return a.id < b.id; });
  }

  const std::vector<IndexEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// k nearest entries by L2 feature distance, ascending; ties by id.
  std::vector<Match> query(const HorizonFeature& q, std::size_t k) const {
    if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be at least 1");
    if (entries_.empty()) throw Error(ErrorCode::kEmptyIndex, "the retrieval index is empty");
    std::vector<Match> all;
    all.reserve(entries_.size());
    for (const auto& e : entries_) {
      const double dl = e.feature.v_left - q.v_left, dr = e.feature.v_right - q.v_right;
      all.push_back({e.id, std::sqrt(dl * dl + dr * dr)});
    }
    const std::size_t n = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(),
                      [](const Match& a, const Match& b) {
                        return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
                      });
    all.resize(n);
    return all;
  }

  std::vector<Match> query(const Orientation& o, const Intrinsics& intr, std::size_t k) const {
    return query(horizon_feature(o, intr), k);
  }

 private:
  std::vector<IndexEntry> entries_;
};

struct SkippedRecord {
  std::string id;
  std::string reason;
};

struct BuildResult {
  RetrievalIndex index;
  std::vector<SkippedRecord> skipped;
};

inline BuildResult build_index(const std::vector<dataset::ManifestEntry>& manifest) {
  std::vector<IndexEntry> entries;
  BuildResult out;
  for (const auto& m : manifest) {
    try {
      entries.push_back({m.id, horizon_feature(m.orientation(), m.intrinsics())});
    } catch (const Error& e) {
      out.skipped.push_back({m.id, e.what()});
    }
  }
  out.index = RetrievalIndex(std::move(entries));
  return out;
}

inline void write_index(const std::filesystem::path& path, const RetrievalIndex& index) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& e : index.entries()) {
    out << fmt::format("{{\"id\":{},\"v_left\":{:.17g},\"v_right\":{:.17g}}}\n", nlohmann::json(e.id).dump(),
                       e.feature.v_left, e.feature.v_right);
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

inline RetrievalIndex read_index(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<IndexEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      entries.push_back({j.at("id").get<std::string>(), {j.at("v_left").get<double>(), j.at("v_right").get<double>()}});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kSchema, std::string("bad index record: ") + e.what());
    }
  }
  return RetrievalIndex(std::move(entries));
}

}  // namespace sphcalib
