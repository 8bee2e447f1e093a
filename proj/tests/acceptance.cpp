// Acceptance suite: one PASS/FAIL line per headline requirement, with the
// measured value next to the threshold. Exit status is nonzero if any hard
// requirement fails; soft targets are reported but do not affect it.

#include <fmt/format.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "sphcalib/camera_model.hpp"
#include "sphcalib/dataset.hpp"
#include "sphcalib/horizon_tools.hpp"
#include "sphcalib/label_codec.hpp"
#include "sphcalib/perceptual.hpp"
#include "sphcalib/png_io.hpp"
#include "sphcalib/undistort.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace sphcalib;

namespace {

int g_hard_failures = 0;

void report(const std::string& name, bool pass, const std::string& detail, bool soft = false) {
  fmt::print("{} {}{}: {}\n", pass ? "PASS" : "FAIL", name, soft ? " (soft)" : "", detail);
  std::fflush(stdout);
  if (!pass && !soft) ++g_hard_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void projection_round_trip() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> xi_d(0.0, 1.0), f_d(40.0, 400.0), px(0.0, 224.0);
  struct Case {
    Intrinsics k;
    PixelPoint p;
  };
  std::vector<Case> cases;
  cases.reserve(100000);
  for (int i = 0; i < 100000; ++i) cases.push_back({Intrinsics::centered(f_d(rng), xi_d(rng), 224, 224), {px(rng), px(rng)}});
  double worst = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& c : cases) {
    const PixelPoint q = project(backproject(c.p, c.k), c.k);
    worst = std::max({worst, std::abs(q.u - c.p.u), std::abs(q.v - c.p.v)});
  }
  const double t = seconds_since(t0);
  report("projection round trip (1e5 pairs)", worst <= 1e-9, fmt::format("max error {:.3g} px (limit 1e-9)", worst));
  report("projection round trip runtime", t < 5.0, fmt::format("{:.3f} s single-threaded (limit 5 s)", t));
}

void pinhole_reduction() {
  std::mt19937_64 rng(102);
  std::uniform_real_distribution<double> f_d(50.0, 500.0), xy(-1.0, 1.0), z_d(0.5, 3.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Intrinsics k = Intrinsics::centered(f_d(rng), 0.0, 320, 240);
    const Eigen::Vector3d p(xy(rng), xy(rng), z_d(rng));
    const PixelPoint q = project(p, k);
    worst = std::max({worst, std::abs(q.u - (k.focal_px * p.x() / p.z() + k.u0)),
                      std::abs(q.v - (k.focal_px * p.y() / p.z() + k.v0))});
  }
  report("pinhole reduction (1e4 points)", worst <= 1e-12, fmt::format("max error {:.3g} px (limit 1e-12)", worst));
}

void rescaling() {
  // A 448^2 crop rendered from a panorama versus the same crop at 224^2 with
  // intrinsics rescaled by s = 2: corresponding pixels sample the same point.
  dataset::CropSpec s;
  s.pano_id = "accept";
  s.hfov_rad = 1.4;
  s.xi = 0.6;
  s.pitch_rad = 0.3;
  s.roll_rad = -0.2;
  s.yaw_rad = 2.0;
  s.render_width = s.render_height = 448;
  const Intrinsics k448 = s.intrinsics();
  const Intrinsics k224 = rescale_intrinsics(k448, 2.0);
  const dataset::CropSourceMap big(s, k448, 4096, 2048), small(s, k224, 4096, 2048);
  double worst = 0.0;
  for (int v = 0; v < 224; ++v) {
    for (int u = 0; u < 224; ++u) {
      const auto a = *big(2 * (u + 0.5), 2 * (v + 0.5));
      const auto b = *small(u + 0.5, v + 0.5);
      double dx = std::abs(a.x() - b.x());
      dx = std::min(dx, 4096 - dx);
      worst = std::max({worst, dx, std::abs(a.y() - b.y())});
    }
  }
  const bool xi_kept = k224.xi == k448.xi && std::abs(k224.focal_px - k448.focal_px / 2) == 0.0;
  report("rescaling s=2 (224^2 target)", worst <= 1e-9 && xi_kept,
         fmt::format("max source-map difference {:.3g} px (limit 1e-9), f'=f/s and xi'=xi: {}", worst, xi_kept));
}

void fov_conversions() {
  double worst_f = 0.0, worst_f_abs = 0.0, worst_xi = 0.0;
  int n = 0;
  for (double f = 50.0; f <= 5000.0; f *= 1.1) {
    for (double xi : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      const double h = effective_hfov(f, xi, 112);
      if (h >= std::numbers::pi) continue;
      const double df = std::abs(focal_from_fov(h, xi, 112) - f);
      worst_f = std::max(worst_f, df / f);
      worst_f_abs = std::max(worst_f_abs, df);
      worst_xi = std::max(worst_xi, std::abs(xi_from_fov_focal(h, f, 112) - xi));
      ++n;
    }
  }
  report("FoV round trips (grid)", worst_f_abs <= 1e-9 && worst_xi <= 1e-9,
         fmt::format("{} grid points, max relative focal error {:.3g} ({:.3g} px absolute), max xi error {:.3g} (limit 1e-9)",
                     n, worst_f, worst_f_abs, worst_xi));
  double worst_s = 0.0;
  for (double f : {50.0, 300.0, 2000.0}) {
    for (double xi : {0.0, 0.5, 1.0}) {
      for (double s : {0.25, 2.0, 7.0}) {
        worst_s = std::max(worst_s, std::abs(effective_hfov(s * f, xi, s * 112) - effective_hfov(f, xi, 112)));
      }
    }
  }
  report("FoV scale invariance", worst_s <= 1e-12, fmt::format("max hfov change {:.3g} rad", worst_s));
}

void midpoint() {
  std::mt19937_64 rng(103);
  std::uniform_real_distribution<double> th(-1.2, 1.2), f_d(50.0, 800.0), xi_d(0.0, 1.0);
  double worst_pin = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Intrinsics k = Intrinsics::centered(f_d(rng), 0.0, 320, 240);
    const double t = th(rng);
    const double bp = -k.focal_px * std::tan(t) + k.v0;
    worst_pin = std::max(worst_pin, std::abs(horizon_midpoint_px(horizon_midpoint({t, 0.0}, k), k) - bp));
  }
  report("midpoint pinhole tangent rule", worst_pin <= 1e-9, fmt::format("max error {:.3g} px (limit 1e-9)", worst_pin));
  double worst_inv = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Intrinsics k = Intrinsics::centered(f_d(rng), xi_d(rng), 224, 224);
    const double t = th(rng);
    worst_inv = std::max(worst_inv, std::abs(pitch_from_midpoint(horizon_midpoint({t, 0.0}, k), k) - t));
  }
  report("pitch_from_midpoint inverse (1e3 triples)", worst_inv <= 1e-9,
         fmt::format("max error {:.3g} rad (limit 1e-9)", worst_inv));
}

void undistortion() {
  const Intrinsics k = Intrinsics::centered(400.0, 0.9, 1024, 1024);
  const TargetSpec target = default_target(k);
  const std::vector<Eigen::Vector3d> planes{{1.0, 0.1, -0.3}, {1.0, -0.2, 0.45}, {0.1, 1.0, -0.35}, {-0.15, 1.0, 0.2}};
  double worst = 0.0, curved = 1e300;
  Image first;
  for (std::size_t i = 0; i < planes.size(); ++i) {
    const Eigen::Vector3d n = planes[i].normalized();
    const double width = 1.5 * 1.9 / 400.0;
    const Image distorted = testing::render_scene(k, 1024, 1024, [&](const Eigen::Vector3d& d) {
      return static_cast<float>(0.5 + 0.5 * std::tanh(d.normalized().dot(n) / width));
    });
    if (i == 0) first = distorted;
    const bool vertical = i < 2;
    curved = std::min(curved, testing::fit_line_tls(testing::edge_crossings(distorted, vertical, 8)).max_residual);
    const auto pts = testing::edge_crossings(undistort(distorted, k, target), vertical, 8);
    worst = std::max(worst, pts.size() < 800 ? 1e300 : testing::fit_line_tls(pts).max_residual);
  }
  report("undistortion straightness (xi=0.9, 1024^2)", worst < 0.5,
         fmt::format("max line-fit residual {:.3f} px after rectification (limit 0.5); {:.1f} px before", worst, curved));

  // End to end: 16-bit PNG in, rectify on 4 threads, PNG out.
  const fs::path dir = fs::temp_directory_path() / "sphcalib_accept_undistort";
  fs::create_directories(dir);
  write_png(dir / "in.png", first, 16);
  const auto t0 = std::chrono::steady_clock::now();
  const Image src = read_png(dir / "in.png");
  write_png(dir / "out.png", undistort(src, k, target, 4), 16);
  const double t = seconds_since(t0);
  fs::remove_all(dir);
  report("undistortion runtime (1024^2, 4 threads)", t < 10.0,
         fmt::format("{:.3f} s end to end (limit 10 s; {} hardware threads available)", t,
                     std::thread::hardware_concurrency()));
}

void write_test_panoramas(const fs::path& dir, int n, int w, int h) {
  fs::create_directories(dir);
  for (int p = 0; p < n; ++p) {
    Image pano(w, h, 3);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        pano.at(x, y, 0) = static_cast<float>(x) / (w - 1);
        pano.at(x, y, 1) = static_cast<float>(y) / (h - 1);
        pano.at(x, y, 2) = static_cast<float>((x / 16 + y / 16) % 2);
      }
    }
    write_png(dir / fmt::format("pano{:02d}.png", p), pano);
  }
}

void dataset_generator() {
  const fs::path root = fs::temp_directory_path() / "sphcalib_accept_dataset";
  fs::remove_all(root);
  write_test_panoramas(root / "panos", 20, 256, 128);
  const dataset::SamplingConfig c;
  const auto a = dataset::generate_dataset(root / "panos", root / "a", c, {140, 7, 0, 8});
  const auto b = dataset::generate_dataset(root / "panos", root / "b", c, {140, 7, 1, 8});
  bool same = slurp(a.manifest_path) == slurp(b.manifest_path) && !slurp(a.manifest_path).empty();
  for (const auto& r : a.records) same = same && slurp(root / "a" / r.file) == slurp(root / "b" / r.file);
  report("dataset determinism (fixed seed)", same,
         fmt::format("{} crops, manifests and images byte-identical across thread counts: {}", a.records.size(), same));

  std::map<std::string, std::set<std::string>> splits_of;
  for (const auto& e : dataset::read_manifest(a.manifest_path)) splits_of[e.pano_id].insert(e.split);
  std::set<std::string> used;
  bool disjoint = true;
  for (const auto& [pano, s] : splits_of) {
    disjoint = disjoint && s.size() == 1;
    used.insert(s.begin(), s.end());
  }
  fs::remove_all(root);
  report("dataset panorama-disjoint splits", disjoint,
         fmt::format("{} panoramas, each in exactly one split: {}; splits present: {}", splits_of.size(), disjoint,
                     fmt::join(used, ",")));

  std::vector<double> xs;
  double worst_label = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const auto s = dataset::sample_crop_spec(2024, c, "pano" + std::to_string(i / 7), i % 7);
    xs.push_back(s.xi);
    const auto l = dataset::label_for(s);
    const Intrinsics k = Intrinsics::centered(l.focal_px, l.xi, s.render_width, s.render_height);
    worst_label = std::max({worst_label, std::abs(horizon_midpoint({l.pitch_rad, l.roll_rad}, k) - l.midpoint_units),
                            std::abs(effective_hfov(k) - l.hfov_rad)});
  }
  report("dataset label self-consistency", worst_label <= 1e-9,
         fmt::format("max midpoint/hfov recompute error {:.3g} (limit 1e-9)", worst_label));
  std::sort(xs.begin(), xs.end());
  double sup = 0.0;
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = dataset::xi_mixture_cdf(c, xs[i]);
    sup = std::max({sup, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
  }
  report("dataset xi CDF (n=1e5)", sup <= 0.01, fmt::format("sup-norm distance {:.4f} (limit 0.01)", sup));
}

void label_codec() {
  std::mt19937_64 rng(104);
  double worst_ratio = 0.0;
  for (const BinSpec& spec : default_bin_set()) {
    std::uniform_real_distribution<double> d(spec.lo(), spec.hi());
    for (int i = 0; i < 10000; ++i) {
      const double x = d(rng);
      const double w = spec.width(spec.bin_index(x));
      for (double sigma : {0.0, default_sigma(spec, x)}) {
        const double back = decode(encode(x, spec, sigma).dist, spec, DecodeMode::kArgmaxCenter);
        worst_ratio = std::max(worst_ratio, std::abs(back - x) / w);
      }
    }
  }
  report("codec decode(encode(x)) (4 heads x 1e4)", worst_ratio <= 0.5 + 1e-12,
         fmt::format("max error {:.6f} bin widths (limit 0.5)", worst_ratio));

  const BinSpec roll = construct_roll_bins();
  const std::size_t z = roll.bin_index(0.0);
  const double w0 = roll.width(z);
  report("codec roll-bin width at 0", roll.edges()[z] == 0.0 && std::abs(w0 - 0.004) <= 1e-15,
         fmt::format("width {:.17g} (0.044 - 0.04 in binary64; |w - 0.004| = {:.2g})", w0, std::abs(w0 - 0.004)));

  std::exponential_distribution<double> e(1.0);
  double min_kl = 1e300, self_kl = 0.0;
  for (int t = 0; t < 10000; ++t) {
    BinDistribution p{std::vector<double>(32)}, q{std::vector<double>(32)};
    double sp = 0, sq = 0;
    for (int i = 0; i < 32; ++i) {
      p.probs[i] = (t % 3 == 0 && i % 4 == 0) ? 0.0 : e(rng);
      q.probs[i] = e(rng);
      sp += p.probs[i];
      sq += q.probs[i];
    }
    for (auto& v : p.probs) v /= sp;
    for (auto& v : q.probs) v /= sq;
    min_kl = std::min(min_kl, kl_loss(p, q));
    self_kl = std::max(self_kl, std::abs(kl_loss(p, p)));
  }
  report("codec KL >= 0 and KL(p||p) = 0", min_kl >= 0.0 && self_kl == 0.0,
         fmt::format("min KL {:.3g} over 1e4 pairs, max |KL(p||p)| {:.3g}", min_kl, self_kl));
}

void perceptual_surface() {
  namespace pc = sphcalib::perceptual;
  std::mt19937_64 rng(105);

  // Exact reproduction at cell centers.
  pc::PerceptualSurface s;
  s.value_edges = pc::detail::uniform_edges({-0.5, 0.5});
  s.error_edges = pc::detail::uniform_edges({-0.35, 0.35});
  std::uniform_real_distribution<double> r(0.5, 1.0);
  for (int i = 0; i < pc::kGridSize; ++i) {
    for (int j = 0; j < pc::kGridSize; ++j) {
      s.rates[i][j] = r(rng);
      s.valid[i][j] = true;
      s.counts[i][j] = 10;
    }
  }
  double worst_center = 0.0;
  for (int i = 0; i < pc::kGridSize; ++i) {
    for (int j = 0; j < pc::kGridSize; ++j) {
      worst_center = std::max(worst_center, std::abs(pc::evaluate(s, s.value_center(i), s.error_center(j)).value - s.rates[i][j]));
    }
  }
  report("perceptual exact cell centers", worst_center <= 1e-12, fmt::format("max deviation {:.3g}", worst_center));

  // Binomial judgments drawn from a known per-cell rate.
  auto truth = [](int i, int j) { return 0.5 + 0.07 * std::abs(j - 3) + 0.01 * i; };
  const pc::Range vr{-0.5, 0.5}, er{-0.35, 0.35};
  std::uniform_real_distribution<double> dv(vr.lo, vr.hi), de(er.lo, er.hi);
  std::vector<pc::JudgmentRecord> records;
  for (int n = 0; n < 50000; ++n) {
    pc::JudgmentRecord rec;
    rec.parameter = pc::Parameter::kRoll;
    rec.gt_value = dv(rng);
    rec.error = de(rng);
    const int i = *pc::detail::bin_of(s.value_edges, rec.gt_value), j = *pc::detail::bin_of(s.error_edges, rec.error);
    rec.rate = std::bernoulli_distribution(truth(i, j))(rng) ? 1.0 : 0.0;
    rec.image_id = "img" + std::to_string(n % 100);
    records.push_back(rec);
  }
  const pc::PerceptualSurface fit = pc::fit_surface(records, pc::Parameter::kRoll, vr, er);
  double worst_z = 0.0;
  for (int i = 0; i < pc::kGridSize; ++i) {
    for (int j = 0; j < pc::kGridSize; ++j) {
      const double p = truth(i, j), sd = std::sqrt(p * (1 - p) / fit.counts[i][j]);
      worst_z = std::max(worst_z, std::abs(fit.rates[i][j] - p) / sd);
    }
  }
  report("perceptual binomial recovery", worst_z <= 3.0, fmt::format("max |z| {:.2f} over 49 cells (limit 3)", worst_z));

  // Surface equal to 0.5 at zero error, rising with |error|.
  std::map<pc::Parameter, pc::PerceptualSurface> surfaces;
  for (pc::Parameter p : {pc::Parameter::kPitch, pc::Parameter::kRoll, pc::Parameter::kHfov, pc::Parameter::kXi}) {
    const auto ranges = pc::default_ranges(p);
    pc::PerceptualSurface q;
    q.parameter = p;
    q.value_edges = pc::detail::uniform_edges(ranges.value);
    q.error_edges = pc::detail::uniform_edges(ranges.error);
    for (int i = 0; i < pc::kGridSize; ++i) {
      for (int j = 0; j < pc::kGridSize; ++j) {
        q.rates[i][j] = 0.5 + 0.15 * std::abs(j - 3);
        q.valid[i][j] = true;
        q.counts[i][j] = 10;
      }
    }
    surfaces[p] = q;
  }
  std::vector<pc::Estimate> estimates;
  for (pc::Parameter p : {pc::Parameter::kPitch, pc::Parameter::kRoll, pc::Parameter::kHfov, pc::Parameter::kXi}) {
    const auto ranges = pc::default_ranges(p);
    std::uniform_real_distribution<double> d(ranges.value.lo, ranges.value.hi);
    for (int i = 0; i < 1000; ++i) {
      const double gt = d(rng);
      estimates.push_back({p, gt, gt});
    }
  }
  double worst_median = 0.0;
  for (const auto& [p, summary] : pc::score_method(surfaces, estimates)) {
    worst_median = std::max(worst_median, std::abs(summary.median - 0.5));
  }
  report("perceptual zero-error medians", worst_median <= 1e-9,
         fmt::format("max |median - 0.5| {:.3g} over 4 parameters", worst_median));
}

void retrieval() {
  std::mt19937_64 rng(106);
  std::uniform_real_distribution<double> pitch(-0.6, 0.6), roll(-0.4, 0.4), f(60, 400), xi(0, 1);
  std::vector<dataset::ManifestEntry> manifest;
  for (int i = 0; i < 1000; ++i) {
    dataset::ManifestEntry e;
    e.id = fmt::format("crop{:04d}", i);
    e.pitch_rad = pitch(rng);
    e.roll_rad = roll(rng);
    e.focal_px = f(rng);
    e.xi = xi(rng);
    e.width = 224;
    e.height = 168;
    manifest.push_back(e);
  }
  const auto built = build_index(manifest);
  bool equal = built.skipped.empty() && built.index.size() == 1000;
  std::uniform_real_distribution<double> qd(-1.0, 1.0);
  for (int t = 0; t < 200 && equal; ++t) {
    const HorizonFeature q{qd(rng), qd(rng)};
    std::vector<Match> scan;
    for (const auto& m : manifest) {
      const auto [l, r] = horizon_endpoints(m.orientation(), m.intrinsics());
      scan.push_back({m.id, std::sqrt((l - q.v_left) * (l - q.v_left) + (r - q.v_right) * (r - q.v_right))});
    }
    std::sort(scan.begin(), scan.end(), [](const Match& a, const Match& b) {
      return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
    });
    const auto got = built.index.query(q, 10);
    for (std::size_t i = 0; i < got.size(); ++i) equal = equal && got[i].id == scan[i].id && got[i].distance == scan[i].distance;
  }
  report("retrieval equals exhaustive scan (1e3 entries)", equal, fmt::format("200 queries, k = 10, identical: {}", equal));

  const auto level = horizon_feature({0.0, 0.0}, Intrinsics::centered(150.0, 0.0, 224, 168));
  report("retrieval level-pinhole feature", level.v_left == 0.0 && level.v_right == 0.0,
         fmt::format("({}, {})", level.v_left, level.v_right));
}

void throughput() {
  const fs::path root = fs::temp_directory_path() / "sphcalib_accept_throughput";
  fs::remove_all(root);
  fs::create_directories(root / "panos");
  Image pano(4096, 2048, 3);
  std::mt19937 rng(107);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& p : pano.pixels) p = u(rng);
  write_png(root / "panos" / "big.png", pano);
  const std::size_t count = 112;
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = dataset::generate_dataset(root / "panos", root / "out", dataset::SamplingConfig{}, {count, 11, 8, 8});
  const double t = seconds_since(t0);
  fs::remove_all(root);
  const double rate = static_cast<double>(res.rendered) / t;
  report("throughput 224^2 crops from 4096x2048 at 8 threads", rate >= 50.0,
         fmt::format("{:.1f} crops/s including panorama decode and PNG output (target 50; {} hardware threads available)",
                     rate, std::thread::hardware_concurrency()),
         true);
}

}  // namespace

int main() {
  try {
    projection_round_trip();
    pinhole_reduction();
    rescaling();
    fov_conversions();
    midpoint();
    undistortion();
    dataset_generator();
    label_codec();
    perceptual_surface();
    retrieval();
    throughput();
  } catch (const std::exception& e) {
    fmt::print("FAIL acceptance suite aborted: {}\n", e.what());
    return 1;
  }
  fmt::print("{} hard requirement(s) failed\n", g_hard_failures);
  return g_hard_failures == 0 ? 0 : 1;
}
