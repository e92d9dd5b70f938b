#pragma once

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pumpshaper/detection.hpp"
#include "pumpshaper/holograms.hpp"
#include "pumpshaper/modes.hpp"
#include "pumpshaper/spdc.hpp"
#include "pumpshaper/spsa.hpp"

namespace pumpshaper::cli {

struct OptimizeStage {
  bool enabled = false;
  SPSAConfig spsa;
  std::optional<double> shots;  // expected counts per cost evaluation; empty is exact
};

struct TomographyStage {
  bool enabled = false;
  double counts = 1e6;
  int bootstrap = 20;
  int starts = 8;
  std::vector<double> rotations{0.0};
};

struct BellStage {
  bool enabled = false;
  std::string state = "spectrum";  // spectrum | max-ent
  std::optional<double> gamma;
  double noise = 1.0;
  bool gamma_scan = false;
  std::optional<double> counts;
};

struct MaskStage {
  bool enabled = false;
  MaskConfig config;
  double mode_waist = kDefaultMaskModeWaist;
  double detection_waist = kDefaultMaskModeWaist;
  std::vector<int> detection_modes{-1, 0, 1};
  bool verify = false;
};

struct Scenario {
  std::string name;
  std::filesystem::path source;
  std::optional<std::uint64_t> seed;
  std::filesystem::path output;

  CrystalConfig crystal;
  double pump_waist = 0.0;
  DetectionConfig detection;
  CoefficientMap pump_coefficients{{0, cplx{1.0, 0.0}}};
  double pump_rotation = 0.0;
  std::optional<std::string> subspace_name;

  OptimizeStage optimize;
  TomographyStage tomography;
  BellStage bell;
  MaskStage mask;

  PumpProfile pump() const { return rotate_pump(PumpProfile::normalized(pump_waist, pump_coefficients), pump_rotation); }
  Subspace subspace() const { return subspace_by_name(subspace_name.value_or("S3")); }
  bool stochastic() const {
    return optimize.enabled || tomography.enabled || (bell.enabled && bell.counts.has_value());
  }
};

namespace detail {

// Scalar and map access with file:line:column diagnostics.
class Reader {
 public:
  explicit Reader(std::string file) : file_(std::move(file)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& key, const std::string& msg) const {
    const auto m = node.Mark();
    std::string where = file_;
    if (m.line >= 0) where += ":" + std::to_string(m.line + 1) + ":" + std::to_string(m.column + 1);
    throw ConfigError(where + ": " + (key.empty() ? "" : key + ": ") + msg);
  }

  void require_map(const YAML::Node& node, const std::string& key) const {
    if (!node.IsMap()) fail(node, key, "expected a mapping");
  }

  void allow_keys(const YAML::Node& node, const std::string& key, const std::set<std::string>& allowed) const {
    require_map(node, key);
    for (const auto& kv : node) {
      const auto k = kv.first.as<std::string>();
      if (!allowed.count(k)) fail(kv.first, key.empty() ? k : key + "." + k, "unknown key");
    }
  }

  template <typename T>
  T scalar(const YAML::Node& node, const std::string& key) const {
    if (!node.IsScalar()) fail(node, key, "expected a scalar");
    try {
      return node.as<T>();
    } catch (const YAML::Exception&) {
      fail(node, key, "cannot parse '" + node.Scalar() + "'");
    }
  }

  double number(const YAML::Node& node, const std::string& key) const {
    const double v = scalar<double>(node, key);
    if (!std::isfinite(v)) fail(node, key, "must be finite");
    return v;
  }

  double positive(const YAML::Node& node, const std::string& key) const {
    const double v = number(node, key);
    if (!(v > 0.0)) fail(node, key, "must be positive");
    return v;
  }

  template <typename T>
  void optional(const YAML::Node& parent, const std::string& prefix, const std::string& name, T& out) const {
    const YAML::Node n = parent[name];
    if (n) out = scalar<T>(n, prefix + name);
  }

  const std::string& file() const { return file_; }

 private:
  std::string file_;
};

}  // namespace detail

inline Scenario parse_scenario(const std::string& text, const std::string& file = "<scenario>") {
  detail::Reader rd(file);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(file + ":" + std::to_string(e.mark.line + 1) + ":" + std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  if (!root || root.IsNull()) throw ConfigError(file + ": scenario is empty");
  rd.allow_keys(root, "",
                {"name", "seed", "output", "crystal", "pump", "detection", "subspace", "optimize", "tomography", "bell", "mask"});

  Scenario s;
  s.source = file;
  s.name = root["name"] ? rd.scalar<std::string>(root["name"], "name") : std::filesystem::path(file).stem().string();
  if (root["seed"]) s.seed = rd.scalar<std::uint64_t>(root["seed"], "seed");
  if (root["output"]) s.output = rd.scalar<std::string>(root["output"], "output");

  // Crystal.
  double length = 15e-3, wavelength = 405e-9, index = CrystalConfig::kDefaultRefractiveIndex;
  double fit = CrystalConfig::kDefaultGaussianFit;
  PhaseMatching model = PhaseMatching::gaussian;
  if (const YAML::Node c = root["crystal"]) {
    rd.allow_keys(c, "crystal", {"length", "pump_wavelength", "refractive_index", "phase_matching", "gaussian_fit"});
    if (c["length"]) length = rd.positive(c["length"], "crystal.length");
    if (c["pump_wavelength"]) wavelength = rd.positive(c["pump_wavelength"], "crystal.pump_wavelength");
    if (c["refractive_index"]) index = rd.positive(c["refractive_index"], "crystal.refractive_index");
    if (c["gaussian_fit"]) fit = rd.positive(c["gaussian_fit"], "crystal.gaussian_fit");
    if (c["phase_matching"]) {
      try {
        model = phase_matching_from_string(rd.scalar<std::string>(c["phase_matching"], "crystal.phase_matching"));
      } catch (const ConfigError& e) {
        rd.fail(c["phase_matching"], "crystal.phase_matching", e.what());
      }
    }
  }
  s.crystal = CrystalConfig::from_wavelength(length, wavelength, index, model, fit);
  const Waists waists = optimal_waists(s.crystal);

  const auto waist_value = [&](const YAML::Node& n, const std::string& key, double fallback) {
    if (!n) return fallback;
    if (n.IsScalar() && n.Scalar() == "optimal") return fallback;
    return rd.positive(n, key);
  };

  // Pump.
  s.pump_waist = waists.pump;
  if (const YAML::Node p = root["pump"]) {
    rd.allow_keys(p, "pump", {"waist", "rotation", "shape", "coefficients"});
    s.pump_waist = waist_value(p["waist"], "pump.waist", waists.pump);
    if (p["rotation"]) s.pump_rotation = rd.number(p["rotation"], "pump.rotation");
    if (p["shape"] && p["coefficients"]) rd.fail(p["shape"], "pump.shape", "give either shape or coefficients");
    if (const YAML::Node shape = p["shape"]) {
      const auto name = rd.scalar<std::string>(shape, "pump.shape");
      if (name == "gaussian") {
        s.pump_coefficients = {{0, cplx{1.0, 0.0}}};
      } else if (name == "hg10") {
        s.pump_coefficients.clear();
        for (const auto& [l, a] : hg10_in_lg_basis()) s.pump_coefficients[l] = a;
      } else {
        rd.fail(shape, "pump.shape", "unknown shape '" + name + "' (expected gaussian or hg10)");
      }
    }
    if (const YAML::Node coeffs = p["coefficients"]) {
      rd.require_map(coeffs, "pump.coefficients");
      s.pump_coefficients.clear();
      for (const auto& kv : coeffs) {
        const int l = rd.scalar<int>(kv.first, "pump.coefficients");
        const std::string key = "pump.coefficients." + std::to_string(l);
        if (std::abs(l) > kMaxPumpOam) {
          rd.fail(kv.first, key, "OAM index outside [-" + std::to_string(kMaxPumpOam) + ", " + std::to_string(kMaxPumpOam) + "]");
        }
        if (!kv.second.IsSequence() || kv.second.size() != 2) rd.fail(kv.second, key, "expected [re, im]");
        s.pump_coefficients[l] = {rd.number(kv.second[0], key), rd.number(kv.second[1], key)};
      }
      if (s.pump_coefficients.empty()) rd.fail(coeffs, "pump.coefficients", "no components");
      double power = 0.0;
      for (const auto& [l, a] : s.pump_coefficients) power += std::norm(a);
      if (!(power > 0.0)) rd.fail(coeffs, "pump.coefficients", "zero total power");
    }
  }

  // Detection.
  s.detection.waist = waists.detection;
  if (const YAML::Node d = root["detection"]) {
    rd.allow_keys(d, "detection", {"waist", "l_min", "l_max"});
    s.detection.waist = waist_value(d["waist"], "detection.waist", waists.detection);
    rd.optional(d, "detection.", "l_min", s.detection.l_min);
    rd.optional(d, "detection.", "l_max", s.detection.l_max);
    if (s.detection.l_min > s.detection.l_max) rd.fail(d, "detection", "l_min exceeds l_max");
  }

  if (const YAML::Node sub = root["subspace"]) {
    s.subspace_name = rd.scalar<std::string>(sub, "subspace");
    try {
      subspace_by_name(*s.subspace_name);
    } catch (const ConfigError& e) {
      rd.fail(sub, "subspace", e.what());
    }
    const auto allowed = pump_components_for(subspace_by_name(*s.subspace_name));
    for (const auto& [l, a] : s.pump_coefficients) {
      if (std::find(allowed.begin(), allowed.end(), l) == allowed.end()) {
        rd.fail(root["pump"] ? root["pump"] : sub, "pump",
                "component l = " + std::to_string(l) + " does not feed subspace " + *s.subspace_name);
      }
    }
    for (const auto& [ls, li] : subspace_by_name(*s.subspace_name)) {
      if (ls < s.detection.l_min || ls > s.detection.l_max || li < s.detection.l_min || li > s.detection.l_max) {
        rd.fail(sub, "subspace", "pair outside the detection window");
      }
    }
  }

  const auto stage_flag = [&](const YAML::Node& n, const std::string& key) {
    return n["enabled"] ? rd.scalar<bool>(n["enabled"], key + ".enabled") : true;
  };

  if (const YAML::Node o = root["optimize"]) {
    rd.allow_keys(o, "optimize", {"enabled", "a", "c", "alpha", "gamma", "stability", "iterations", "shots"});
    s.optimize.enabled = stage_flag(o, "optimize");
    auto& g = s.optimize.spsa;
    rd.optional(o, "optimize.", "a", g.a);
    rd.optional(o, "optimize.", "c", g.c);
    rd.optional(o, "optimize.", "alpha", g.alpha);
    rd.optional(o, "optimize.", "gamma", g.gamma);
    rd.optional(o, "optimize.", "stability", g.stability);
    rd.optional(o, "optimize.", "iterations", g.max_iterations);
    if (const YAML::Node shots = o["shots"]) {
      if (!(shots.IsScalar() && shots.Scalar() == "exact")) s.optimize.shots = rd.positive(shots, "optimize.shots");
    }
    try {
      g.validate();
    } catch (const ConfigError& e) {
      rd.fail(o, "optimize", e.what());
    }
  }

  if (const YAML::Node t = root["tomography"]) {
    rd.allow_keys(t, "tomography", {"enabled", "counts", "bootstrap", "starts", "rotations"});
    s.tomography.enabled = stage_flag(t, "tomography");
    if (t["counts"]) s.tomography.counts = rd.positive(t["counts"], "tomography.counts");
    rd.optional(t, "tomography.", "bootstrap", s.tomography.bootstrap);
    rd.optional(t, "tomography.", "starts", s.tomography.starts);
    if (s.tomography.bootstrap != 0 && s.tomography.bootstrap < 2) rd.fail(t["bootstrap"], "tomography.bootstrap", "needs 0 or at least 2 resamples");
    if (s.tomography.starts < 1) rd.fail(t["starts"], "tomography.starts", "must be at least 1");
    if (const YAML::Node r = t["rotations"]) {
      if (!r.IsSequence() || r.size() == 0) rd.fail(r, "tomography.rotations", "expected a non-empty list of angles");
      s.tomography.rotations.clear();
      for (const auto& x : r) s.tomography.rotations.push_back(rd.number(x, "tomography.rotations"));
    }
  }

  if (const YAML::Node b = root["bell"]) {
    rd.allow_keys(b, "bell", {"enabled", "state", "gamma", "noise", "gamma_scan", "counts"});
    s.bell.enabled = stage_flag(b, "bell");
    if (b["state"]) {
      s.bell.state = rd.scalar<std::string>(b["state"], "bell.state");
      if (s.bell.state != "spectrum" && s.bell.state != "max-ent") {
        rd.fail(b["state"], "bell.state", "expected spectrum or max-ent");
      }
    }
    if (b["gamma"]) s.bell.gamma = rd.positive(b["gamma"], "bell.gamma");
    if (b["noise"]) {
      s.bell.noise = rd.number(b["noise"], "bell.noise");
      if (s.bell.noise < 0.0 || s.bell.noise > 1.0) rd.fail(b["noise"], "bell.noise", "must lie in [0, 1]");
    }
    rd.optional(b, "bell.", "gamma_scan", s.bell.gamma_scan);
    if (const YAML::Node n = b["counts"]) {
      if (!(n.IsScalar() && n.Scalar() == "exact")) s.bell.counts = rd.positive(n, "bell.counts");
    }
  }

  if (const YAML::Node m = root["mask"]) {
    rd.allow_keys(m, "mask", {"enabled", "width", "height", "pitch", "grating_period_px", "incident_waist", "mode_waist",
                              "detection_waist", "detection_modes", "verify"});
    s.mask.enabled = stage_flag(m, "mask");
    auto& cfg = s.mask.config;
    rd.optional(m, "mask.", "width", cfg.width);
    rd.optional(m, "mask.", "height", cfg.height);
    if (m["pitch"]) cfg.pitch = rd.positive(m["pitch"], "mask.pitch");
    double period_px = cfg.grating_period / cfg.pitch;
    if (m["grating_period_px"]) period_px = rd.positive(m["grating_period_px"], "mask.grating_period_px");
    cfg.grating_period = period_px * cfg.pitch;
    if (m["incident_waist"]) {
      const YAML::Node w = m["incident_waist"];
      cfg.incident_waist = (w.IsScalar() && w.Scalar() == "plane") ? kPlaneWave : rd.positive(w, "mask.incident_waist");
    }
    if (m["mode_waist"]) s.mask.mode_waist = rd.positive(m["mode_waist"], "mask.mode_waist");
    s.mask.detection_waist = s.mask.mode_waist;
    if (m["detection_waist"]) s.mask.detection_waist = rd.positive(m["detection_waist"], "mask.detection_waist");
    if (const YAML::Node modes = m["detection_modes"]) {
      if (!modes.IsSequence()) rd.fail(modes, "mask.detection_modes", "expected a list of OAM indices");
      s.mask.detection_modes.clear();
      for (const auto& x : modes) s.mask.detection_modes.push_back(rd.scalar<int>(x, "mask.detection_modes"));
    }
    rd.optional(m, "mask.", "verify", s.mask.verify);
    try {
      cfg.validate();
    } catch (const ConfigError& e) {
      rd.fail(m, "mask", e.what());
    }
  }

  // Pump indices must sit inside the truncation window and normalize.
  try {
    (void)s.pump();
  } catch (const DomainError& e) {
    rd.fail(root["pump"] ? root["pump"] : root, "pump", e.what());
  }
  return s;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path.string());
}

}  // namespace pumpshaper::cli
