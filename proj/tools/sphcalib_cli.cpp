// sphcalib: command-line front end. Angles are degrees on the command line
// and radians everywhere else.

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "sphcalib/camera_model.hpp"
#include "sphcalib/dataset.hpp"
#include "sphcalib/errors.hpp"
#include "sphcalib/horizon_tools.hpp"
#include "sphcalib/label_codec.hpp"
#include "sphcalib/perceptual.hpp"
#include "sphcalib/png_io.hpp"
#include "sphcalib/undistort.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Globals {
  bool json = false;
  int threads = 0;
};

/// Prints `j` as JSON or as "key: value" lines.
void emit(const Globals& g, const json& j) {
  if (g.json) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  for (const auto& [k, v] : j.items()) {
    if (v.is_string()) {
      std::cout << k << ": " << v.get<std::string>() << '\n';
    } else {
      std::cout << k << ": " << v.dump() << '\n';
    }
  }
}

std::optional<double> deg_to_rad(const std::optional<double>& deg) {
  if (!deg) return std::nullopt;
  return *deg * kDeg;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw sphcalib::Error(sphcalib::ErrorCode::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw sphcalib::Error(sphcalib::ErrorCode::kSchema, path.string() + ": " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw sphcalib::Error(sphcalib::ErrorCode::kIo, "cannot write " + path.string());
}

/// Camera options shared by several subcommands.
struct CameraFlags {
  double width = 0.0;
  std::optional<double> height;
  std::optional<double> focal_px;
  std::optional<double> hfov_deg;
  std::optional<double> xi;
  double pitch_deg = 0.0;
  double roll_deg = 0.0;

  void add_intrinsics(CLI::App* app, bool need_size) {
    auto* w = app->add_option("--width", width, "image width in pixels");
    if (need_size) w->required();
    app->add_option("--height", height, "image height in pixels (default: width)");
    auto* f = app->add_option("--focal-px", focal_px, "focal length in pixels");
    auto* h = app->add_option("--hfov-deg", hfov_deg, "horizontal field of view in degrees");
    app->add_option("--xi", xi, "distortion parameter in [0, 1]");
    (void)f;
    (void)h;
  }
  void add_orientation(CLI::App* app) {
    app->add_option("--pitch-deg", pitch_deg, "camera pitch in degrees (positive moves the horizon up)");
    app->add_option("--roll-deg", roll_deg, "camera roll in degrees");
  }

  sphcalib::Intrinsics intrinsics(double w, double h) const {
    const auto t = sphcalib::complete_fov_triplet(w / 2.0, focal_px, deg_to_rad(hfov_deg), xi);
    return sphcalib::Intrinsics::centered(t.focal_px, t.xi, w, h);
  }
  sphcalib::Intrinsics intrinsics() const { return intrinsics(width, height.value_or(width)); }
  sphcalib::Orientation orientation() const { return {pitch_deg * kDeg, roll_deg * kDeg}; }
};

// ---------------------------------------------------------------------------
// params

void add_params(CLI::App& root, const Globals& g) {
  auto* app = root.add_subcommand("params", "convert among focal, FoV, xi, horizon midpoint and pitch");
  auto flags = std::make_shared<CameraFlags>();
  auto pitch = std::make_shared<std::optional<double>>();
  auto midpoint = std::make_shared<std::optional<double>>();
  auto roll = std::make_shared<double>(0.0);
  flags->add_intrinsics(app, true);
  auto* p = app->add_option("--pitch-deg", *pitch, "pitch in degrees; reports the horizon midpoint");
  auto* m = app->add_option("--midpoint-units", *midpoint, "horizon midpoint (top = +1); reports the pitch");
  p->excludes(m);
  app->add_option("--roll-deg", *roll, "roll in degrees (used for the border crossings)");
  app->callback([=, &g] {
    const auto k = flags->intrinsics();
    json out{{"width", k.width},
             {"height", k.height},
             {"focal_px", k.focal_px},
             {"xi", k.xi},
             {"hfov_rad", sphcalib::effective_hfov(k)},
             {"hfov_deg", sphcalib::effective_hfov(k) / kDeg}};
    std::optional<double> pitch_rad;
    if (*pitch) pitch_rad = **pitch * kDeg;
    if (*midpoint) {
      pitch_rad = sphcalib::pitch_from_midpoint(**midpoint, k);
    }
    if (pitch_rad) {
      const sphcalib::Orientation o{*pitch_rad, *roll * kDeg};
      const double vm = sphcalib::horizon_midpoint(o, k);
      out["pitch_rad"] = *pitch_rad;
      out["pitch_deg"] = *pitch_rad / kDeg;
      out["midpoint_units"] = vm;
      out["midpoint_px"] = sphcalib::horizon_midpoint_px(vm, k);
      try {
        const auto [l, r] = sphcalib::horizon_endpoints(o, k);
        out["v_left"] = l;
        out["v_right"] = r;
      } catch (const sphcalib::Error&) {
        out["v_left"] = nullptr;
        out["v_right"] = nullptr;
      }
    }
    emit(g, out);
  });
}

// ---------------------------------------------------------------------------
// dataset

void add_dataset(CLI::App& root, const Globals& g) {
  auto* ds = root.add_subcommand("dataset", "labeled crop generation");
  ds->require_subcommand(1);
  auto* app = ds->add_subcommand("generate", "render labeled crops from equirectangular panoramas");
  struct Opts {
    std::string panos, out, config;
    std::size_t count = 0;
    std::uint64_t seed = 0;
    int bit_depth = 8;
  };
  auto o = std::make_shared<Opts>();
  app->add_option("--panos", o->panos, "directory of equirectangular PNG panoramas")->required();
  app->add_option("--out", o->out, "output directory")->required();
  app->add_option("--count", o->count, "number of crops")->required();
  app->add_option("--seed", o->seed, "random seed")->required();
  app->add_option("--config", o->config, "JSON sampling configuration overriding the defaults");
  app->add_option("--bit-depth", o->bit_depth, "PNG bit depth of the crops")->check(CLI::IsMember({8, 16}));
  app->callback([=, &g] {
    const sphcalib::dataset::SamplingConfig config =
        o->config.empty() ? sphcalib::dataset::SamplingConfig{} : sphcalib::dataset::config_from_json(read_json_file(o->config));
    sphcalib::dataset::GenerateOptions opt;
    opt.count = o->count;
    opt.seed = o->seed;
    opt.threads = g.threads;
    opt.png_bit_depth = o->bit_depth;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = sphcalib::dataset::generate_dataset(o->panos, o->out, config, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    emit(g, {{"manifest", r.manifest_path.string()},
             {"records", r.records.size()},
             {"rendered", r.rendered},
             {"reused", r.reused},
             {"seconds", secs}});
  });
}

// ---------------------------------------------------------------------------
// undistort

void add_undistort(CLI::App& root, const Globals& g) {
  auto* app = root.add_subcommand("undistort", "rectify a spherical-model image to a pinhole image");
  struct Opts {
    std::string input, out;
    CameraFlags cam;
    std::optional<double> target_hfov_deg, target_focal_px;
    std::optional<int> target_width, target_height;
    int bit_depth = 8;
  };
  auto o = std::make_shared<Opts>();
  app->add_option("--input", o->input, "input PNG")->required();
  app->add_option("--out", o->out, "output PNG")->required();
  app->add_option("--xi", o->cam.xi, "distortion of the input")->required();
  auto* f = app->add_option("--focal-px", o->cam.focal_px, "focal length of the input in pixels");
  auto* h = app->add_option("--hfov-deg", o->cam.hfov_deg, "horizontal FoV of the input in degrees");
  f->excludes(h);
  auto* tf = app->add_option("--target-focal-px", o->target_focal_px, "pinhole focal of the output");
  auto* th = app->add_option("--target-hfov-deg", o->target_hfov_deg, "horizontal FoV of the output in degrees");
  tf->excludes(th);
  app->add_option("--target-width", o->target_width, "output width (default: input width)");
  app->add_option("--target-height", o->target_height, "output height (default: input height)");
  app->add_option("--bit-depth", o->bit_depth, "PNG bit depth of the output")->check(CLI::IsMember({8, 16}));
  app->callback([=, &g] {
    if (!o->cam.focal_px && !o->cam.hfov_deg) {
      throw sphcalib::Error(sphcalib::ErrorCode::kInvalidArgument, "give --focal-px or --hfov-deg");
    }
    const sphcalib::Image src = sphcalib::read_png(o->input);
    const auto k = o->cam.intrinsics(src.width, src.height);
    sphcalib::TargetSpec target = sphcalib::default_target(k);
    if (o->target_width) target.width = *o->target_width;
    if (o->target_height) target.height = *o->target_height;
    if (o->target_focal_px || o->target_hfov_deg) {
      target.focal_px = o->target_focal_px;
      target.hfov_rad = deg_to_rad(o->target_hfov_deg);
    }
    const auto kt = sphcalib::target_intrinsics(target);
    const auto t0 = std::chrono::steady_clock::now();
    const sphcalib::Image out = sphcalib::undistort(src, k, target, g.threads);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    sphcalib::write_png(o->out, out, o->bit_depth);
    emit(g, {{"output", o->out},
             {"width", out.width},
             {"height", out.height},
             {"source_focal_px", k.focal_px},
             {"source_xi", k.xi},
             {"target_focal_px", kt.focal_px},
             {"target_hfov_deg", sphcalib::effective_hfov(kt) / kDeg},
             {"seconds", secs}});
  });
}

// ---------------------------------------------------------------------------
// horizon

json matches_json(const std::vector<sphcalib::Match>& m) {
  json arr = json::array();
  for (const auto& x : m) arr.push_back({{"id", x.id}, {"distance", x.distance}});
  return arr;
}

void add_horizon(CLI::App& root, const Globals& g) {
  auto* hz = root.add_subcommand("horizon", "horizon overlays, border crossings and retrieval");
  hz->require_subcommand(1);

  {
    auto* app = hz->add_subcommand("draw", "overlay the horizon on an image");
    struct Opts {
      std::string input, out;
      CameraFlags cam;
      double thickness_px = 2.0;
      std::vector<float> color{1.0f, 0.0f, 0.0f};
    };
    auto o = std::make_shared<Opts>();
    app->add_option("--input", o->input, "input PNG")->required();
    app->add_option("--out", o->out, "output PNG")->required();
    app->add_option("--focal-px", o->cam.focal_px, "focal length in pixels");
    app->add_option("--hfov-deg", o->cam.hfov_deg, "horizontal FoV in degrees");
    app->add_option("--xi", o->cam.xi, "distortion parameter");
    o->cam.add_orientation(app);
    app->add_option("--thickness-px", o->thickness_px, "line thickness in pixels");
    app->add_option("--color", o->color, "line color as three values in [0, 1]")->expected(3);
    app->callback([=, &g] {
      const sphcalib::Image img = sphcalib::read_png(o->input);
      const auto k = o->cam.intrinsics(img.width, img.height);
      const auto out = sphcalib::draw_horizon(img, o->cam.orientation(), k, {o->color[0], o->color[1], o->color[2]},
                                              o->thickness_px);
      sphcalib::write_png(o->out, out);
      emit(g, {{"output", o->out}});
    });
  }

  {
    auto* app = hz->add_subcommand("endpoints", "horizon crossings with the left and right image borders");
    auto cam = std::make_shared<CameraFlags>();
    cam->add_intrinsics(app, true);
    cam->add_orientation(app);
    app->callback([=, &g] {
      const auto k = cam->intrinsics();
      const auto o = cam->orientation();
      const auto f = sphcalib::horizon_feature(o, k);
      emit(g, {{"v_left", f.v_left},
               {"v_right", f.v_right},
               {"midpoint_units", sphcalib::horizon_midpoint(o, k)}});
    });
  }

  {
    auto* app = hz->add_subcommand("index", "build a retrieval index from a dataset manifest");
    auto manifest = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    app->add_option("--manifest", *manifest, "JSONL manifest")->required();
    app->add_option("--out", *out, "index JSONL to write")->required();
    app->callback([=, &g] {
      const auto r = sphcalib::build_index(sphcalib::dataset::read_manifest(*manifest));
      sphcalib::write_index(*out, r.index);
      json skipped = json::array();
      for (const auto& s : r.skipped) skipped.push_back({{"id", s.id}, {"reason", s.reason}});
      for (const auto& s : r.skipped) std::cerr << "skipped " << s.id << ": " << s.reason << '\n';
      emit(g, {{"index", *out}, {"entries", r.index.size()}, {"skipped", skipped}});
    });
  }

  {
    auto* app = hz->add_subcommand("retrieve", "nearest images by horizon feature (L2)");
    struct Opts {
      std::string index, manifest;
      std::optional<double> v_left, v_right;
      CameraFlags cam;
      std::size_t k = 4;
    };
    auto o = std::make_shared<Opts>();
    auto* idx = app->add_option("--index", o->index, "index JSONL");
    auto* man = app->add_option("--manifest", o->manifest, "manifest JSONL (index built on the fly)");
    idx->excludes(man);
    auto* vl = app->add_option("--v-left-units", o->v_left, "query: left border crossing (top = +1)");
    auto* vr = app->add_option("--v-right-units", o->v_right, "query: right border crossing (top = +1)");
    vl->needs(vr);
    vr->needs(vl);
    o->cam.add_intrinsics(app, false);
    o->cam.add_orientation(app);
    app->add_option("--k", o->k, "number of matches")->check(CLI::PositiveNumber);
    app->callback([=, &g] {
      sphcalib::RetrievalIndex index;
      if (!o->index.empty()) {
        index = sphcalib::read_index(o->index);
      } else if (!o->manifest.empty()) {
        index = sphcalib::build_index(sphcalib::dataset::read_manifest(o->manifest)).index;
      } else {
        throw sphcalib::Error(sphcalib::ErrorCode::kInvalidArgument, "give --index or --manifest");
      }
      sphcalib::HorizonFeature q;
      if (o->v_left) {
        q = {*o->v_left, *o->v_right};
      } else {
        if (!(o->cam.width > 0)) {
          throw sphcalib::Error(sphcalib::ErrorCode::kInvalidArgument,
                                "give --v-left-units/--v-right-units or camera parameters with --width");
        }
        q = sphcalib::horizon_feature(o->cam.orientation(), o->cam.intrinsics());
      }
      const auto m = index.query(q, o->k);
      if (g.json) {
        emit(g, {{"query", {{"v_left", q.v_left}, {"v_right", q.v_right}}}, {"matches", matches_json(m)}});
      } else {
        for (const auto& x : m) std::cout << x.id << ' ' << fmt::format("{:.9g}", x.distance) << '\n';
      }
    });
  }
}

// ---------------------------------------------------------------------------
// perceptual

namespace pc = sphcalib::perceptual;

/// CSV angles are degrees unless --csv-radians is given.
double csv_scale(pc::Parameter p, bool radians) { return pc::is_angular(p) && !radians ? kDeg : 1.0; }

std::map<pc::Parameter, pc::PerceptualSurface> read_surfaces(const fs::path& path) {
  const json j = read_json_file(path);
  std::map<pc::Parameter, pc::PerceptualSurface> out;
  try {
    for (const auto& s : j.at("surfaces")) {
      auto surface = pc::surface_from_json(s);
      out[surface.parameter] = surface;
    }
  } catch (const json::exception& e) {
    throw sphcalib::Error(sphcalib::ErrorCode::kSchema, path.string() + ": " + e.what());
  }
  return out;
}

json summary_json(const pc::QuartileSummary& s) {
  return {{"count", s.count}, {"median", s.median}, {"q1", s.q1}, {"q3", s.q3}, {"mean", s.mean}};
}

void add_perceptual(CLI::App& root, const Globals& g) {
  auto* pa = root.add_subcommand("perceptual", "human-perceptual error measure");
  pa->require_subcommand(1);

  {
    auto* app = pa->add_subcommand("fit", "fit 7x7 detection surfaces from judgments");
    struct Opts {
      std::string csv, surface;
      int min_count = 5;
      bool radians = false;
    };
    auto o = std::make_shared<Opts>();
    app->add_option("--csv", o->csv, "judgments: parameter,gt_value,error,chose_gt,image_id")->required();
    app->add_option("--surface", o->surface, "surface JSON to write")->required();
    app->add_option("--min-count", o->min_count, "judgments needed for a cell to be used");
    app->add_flag("--csv-radians", o->radians, "angles in the CSV are radians (default: degrees)");
    app->callback([=, &g] {
      std::ifstream in(o->csv);
      if (!in) throw sphcalib::Error(sphcalib::ErrorCode::kIo, "cannot open " + o->csv);
      auto records = pc::read_judgments_csv(in);
      std::map<pc::Parameter, bool> present;
      for (auto& r : records) {
        const double s = csv_scale(r.parameter, o->radians);
        r.gt_value *= s;
        r.error *= s;
        present[r.parameter] = true;
      }
      if (present.empty()) throw sphcalib::Error(sphcalib::ErrorCode::kNoData, "no judgments in " + o->csv);
      json surfaces = json::array();
      json report = json::object();
      for (const auto& [p, _] : present) {
        const auto ranges = pc::default_ranges(p);
        const auto s = pc::fit_surface(records, p, ranges.value, ranges.error, o->min_count);
        surfaces.push_back(pc::to_json(s));
        int masked = 0;
        for (const auto& row : s.valid) masked += static_cast<int>(std::count(row.begin(), row.end(), false));
        report[std::string(pc::to_string(p))] = {{"masked_cells", masked}};
      }
      write_text_file(o->surface, json{{"surfaces", surfaces}}.dump(2) + "\n");
      emit(g, {{"surface", o->surface}, {"parameters", report}});
    });
  }

  {
    auto* app = pa->add_subcommand("eval", "detection probability of one error");
    struct Opts {
      std::string surface, parameter;
      double gt = 0.0, error = 0.0;
    };
    auto o = std::make_shared<Opts>();
    app->add_option("--surface", o->surface, "surface JSON")->required();
    app->add_option("--parameter", o->parameter, "pitch, roll, hfov or xi")->required();
    app->add_option("--gt-value", o->gt, "ground-truth value (degrees for angles)")->required();
    app->add_option("--error-value", o->error, "signed error (degrees for angles)")->required();
    app->callback([=, &g] {
      const auto p = pc::parameter_from_string(o->parameter);
      const auto surfaces = read_surfaces(o->surface);
      const auto it = surfaces.find(p);
      if (it == surfaces.end()) {
        throw sphcalib::Error(sphcalib::ErrorCode::kMissingSurface, "no surface for " + o->parameter);
      }
      const double s = csv_scale(p, false);
      const auto d = pc::evaluate(it->second, o->gt * s, o->error * s);
      emit(g, {{"parameter", o->parameter}, {"detectability", d.value}, {"degraded", d.degraded}});
    });
  }

  {
    auto* app = pa->add_subcommand("score", "perceptual score of a method's estimates");
    struct Opts {
      std::string csv, surface;
      bool radians = false;
    };
    auto o = std::make_shared<Opts>();
    app->add_option("--csv", o->csv, "estimates: parameter,gt_value,estimate")->required();
    app->add_option("--surface", o->surface, "surface JSON")->required();
    app->add_flag("--csv-radians", o->radians, "angles in the CSV are radians (default: degrees)");
    app->callback([=, &g] {
      std::ifstream in(o->csv);
      if (!in) throw sphcalib::Error(sphcalib::ErrorCode::kIo, "cannot open " + o->csv);
      auto estimates = pc::read_estimates_csv(in);
      for (auto& e : estimates) {
        const double s = csv_scale(e.parameter, o->radians);
        e.gt_value *= s;
        e.estimate *= s;
      }
      const auto scores = pc::score_method(read_surfaces(o->surface), estimates);
      json out = json::object();
      for (const auto& [p, s] : scores) out[std::string(pc::to_string(p))] = summary_json(s);
      emit(g, out);
    });
  }

  {
    auto* app = pa->add_subcommand("marginal", "per-image detection rate by error bin");
    struct Opts {
      std::string csv, parameter;
      int bins = 10;
      bool radians = false;
    };
    auto o = std::make_shared<Opts>();
    app->add_option("--csv", o->csv, "judgments CSV")->required();
    app->add_option("--parameter", o->parameter, "pitch, roll, hfov or xi")->required();
    app->add_option("--bins", o->bins, "number of error bins")->check(CLI::PositiveNumber);
    app->add_flag("--csv-radians", o->radians, "angles in the CSV are radians (default: degrees)");
    app->callback([=, &g] {
      const auto p = pc::parameter_from_string(o->parameter);
      std::ifstream in(o->csv);
      if (!in) throw sphcalib::Error(sphcalib::ErrorCode::kIo, "cannot open " + o->csv);
      auto records = pc::read_judgments_csv(in);
      const double s = csv_scale(p, o->radians);
      for (auto& r : records) {
        if (r.parameter != p) continue;
        r.gt_value *= s;
        r.error *= s;
      }
      const auto bins = pc::marginal_sensitivity(records, p, pc::default_ranges(p).error, o->bins);
      const double back = csv_scale(p, false);
      json arr = json::array();
      for (const auto& b : bins) {
        json item = summary_json(b.per_image);
        item["error_lo"] = b.error_lo / back;
        item["error_hi"] = b.error_hi / back;
        arr.push_back(item);
      }
      emit(g, {{"parameter", o->parameter}, {"bins", arr}});
    });
  }
}

// ---------------------------------------------------------------------------
// bins

void add_bins(CLI::App& root, const Globals& g) {
  auto* bins = root.add_subcommand("bins", "classification-bin codec");
  bins->require_subcommand(1);

  {
    auto* app = bins->add_subcommand("export", "write the bin layout of the four heads as JSON");
    auto out = std::make_shared<std::string>();
    app->add_option("--out", *out, "JSON file to write")->required();
    app->callback([=, &g] {
      const auto set = sphcalib::default_bin_set();
      write_text_file(*out, sphcalib::to_json(set).dump() + "\n");
      json sizes = json::object();
      for (const auto& s : set) sizes[std::string(sphcalib::to_string(s.parameter()))] = s.size();
      emit(g, {{"bins", *out}, {"sizes", sizes}});
    });
  }

  {
    auto* app = bins->add_subcommand("encode", "target distribution of one value");
    struct Opts {
      std::string parameter;
      double value = 0.0;
      std::optional<double> sigma;
    };
    auto o = std::make_shared<Opts>();
    app->add_option("--parameter", o->parameter, "roll, midpoint, hfov or xi")->required();
    app->add_option("--value", o->value, "value in library units (radians, normalized units, xi)")->required();
    app->add_option("--sigma", o->sigma, "Gaussian smoothing in value units (0: one-hot; default: bin width)");
    app->callback([=, &g] {
      const auto spec = sphcalib::default_bins(sphcalib::parameter_from_string(o->parameter));
      const double sigma = o->sigma.value_or(sphcalib::default_sigma(spec, o->value));
      const auto enc = sphcalib::encode(o->value, spec, sigma);
      emit(g, {{"parameter", o->parameter},
               {"bin", spec.bin_index(o->value)},
               {"clamped", enc.clamped},
               {"sigma", sigma},
               {"probs", enc.dist.probs}});
    });
  }

  {
    auto* app = bins->add_subcommand("golden", "reference target encodings for every manifest record");
    struct Opts {
      std::string manifest, out;
      bool one_hot = false;
    };
    auto o = std::make_shared<Opts>();
    app->add_option("--manifest", o->manifest, "JSONL manifest")->required();
    app->add_option("--out", o->out, "JSONL file to write")->required();
    app->add_flag("--one-hot", o->one_hot, "one-hot targets instead of the default smoothing");
    app->callback([=, &g] {
      const auto set = sphcalib::default_bin_set();
      std::string text;
      std::size_t n = 0;
      for (const auto& e : sphcalib::dataset::read_manifest(o->manifest)) {
        json rec{{"id", e.id}};
        for (const auto& spec : set) {
          double v = 0.0;
          switch (spec.parameter()) {
            case sphcalib::Parameter::kRoll: v = e.roll_rad; break;
            case sphcalib::Parameter::kMidpoint: v = e.midpoint_units; break;
            case sphcalib::Parameter::kHfov: v = e.hfov_rad; break;
            case sphcalib::Parameter::kXi: v = e.xi; break;
          }
          const double sigma = o->one_hot ? 0.0 : sphcalib::default_sigma(spec, v);
          const auto enc = sphcalib::encode(v, spec, sigma);
          const std::string name(sphcalib::to_string(spec.parameter()));
          rec[name] = {{"value", v}, {"bin", spec.bin_index(v)}, {"sigma", sigma}, {"probs", enc.dist.probs}};
        }
        text += rec.dump() + "\n";
        ++n;
      }
      write_text_file(o->out, text);
      emit(g, {{"golden", o->out}, {"records", n}});
    });
  }
}

/// Input-validation failures exit with 2, everything else with 1.
int exit_code_for(sphcalib::ErrorCode c) {
  using sphcalib::ErrorCode;
  switch (c) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kInvalidFov:
    case ErrorCode::kOutOfModelRange:
    case ErrorCode::kInvalidTarget:
    case ErrorCode::kSchema:
    case ErrorCode::kNoValidPitch:
    case ErrorCode::kHorizonAtInfinity:
    case ErrorCode::kDegenerateProjection:
      return 2;
    default:
      return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unified spherical camera model toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_flag("--json", g.json, "machine-readable JSON on stdout");
  app.add_option("--threads", g.threads, "worker threads (default: CALIB_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);
  app.fallthrough();

  add_params(app, g);
  add_dataset(app, g);
  add_undistort(app, g);
  add_horizon(app, g);
  add_perceptual(app, g);
  add_bins(app, g);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const sphcalib::Error& e) {
    if (g.json) {
      std::cout << json{{"error", {{"code", std::string(sphcalib::to_string(e.code()))}, {"message", e.what()}}}}.dump(2)
                << '\n';
    }
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
