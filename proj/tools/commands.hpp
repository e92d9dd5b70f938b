#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pumpshaper/bell.hpp"
#include "pumpshaper/detection.hpp"
#include "pumpshaper/holograms.hpp"
#include "pumpshaper/io.hpp"
#include "pumpshaper/spdc.hpp"
#include "pumpshaper/spsa.hpp"
#include "pumpshaper/tomography.hpp"
#include "scenario.hpp"

namespace pumpshaper::cli {

using io::json;

struct Options {
  std::filesystem::path scenario;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;
  bool force = false;
  bool verify = false;
  std::string shots;  // "", "exact" or a count
  std::filesystem::path counts;
  std::filesystem::path coefficients;
  std::string state;  // "", "max-ent", "spectrum" or a state file
  std::optional<double> noise;
  bool gamma_scan = false;
};

// Independent generator per pipeline stage, derived from the run seed.
enum class Stage : std::uint32_t { spsa = 1, lab = 2, tomography = 3, bootstrap = 4, bell = 5, spectrum = 6 };

class Context {
 public:
  Context(Scenario scenario, const Options& opt) : scenario_(std::move(scenario)), opt_(opt) {
    if (opt.seed) scenario_.seed = opt.seed;
    out_ = !opt.out.empty() ? opt.out : (!scenario_.output.empty() ? scenario_.output : std::filesystem::path("out") / scenario_.name);
    started_ = std::chrono::steady_clock::now();
  }

  const Scenario& scenario() const { return scenario_; }
  Scenario& scenario() { return scenario_; }
  const Options& options() const { return opt_; }
  const std::filesystem::path& out() const { return out_; }

  std::uint64_t seed() const {
    if (!scenario_.seed) throw ConfigError(scenario_.source.string() + ": a seed is required for stochastic stages (scenario 'seed' or --seed)");
    return *scenario_.seed;
  }

  std::mt19937_64 rng(Stage stage) const {
    const std::uint64_t s = seed();
    std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32), static_cast<std::uint32_t>(stage)};
    return std::mt19937_64(seq);
  }

  std::uint64_t stage_seed(Stage stage) const { return rng(stage)(); }

  void write(const std::string& name, const std::string& content) const {
    io::write_file(out_ / name, content, opt_.force);
    written_.push_back((out_ / name).string());
  }

  // Wall-clock facts only; everything outside this block is reproducible.
  json meta() const {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::ostringstream ts;
    ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    return {{"timestamp", ts.str()}, {"wall_seconds", wall}};
  }

  const std::vector<std::string>& written() const { return written_; }

 private:
  Scenario scenario_;
  Options opt_;
  std::filesystem::path out_;
  std::chrono::steady_clock::time_point started_;
  mutable std::vector<std::string> written_;
};

// --shots overrides the scenario; "exact" disables shot noise.
inline std::optional<double> resolve_shots(const std::string& flag, std::optional<double> fallback) {
  if (flag.empty()) return fallback;
  if (flag == "exact") return std::nullopt;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(flag, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != flag.size() || !(v > 0.0) || !std::isfinite(v)) throw ConfigError("--shots expects a positive count or 'exact', got '" + flag + "'");
  return v;
}

inline const OamWindow kQutritWindow{-1, 1};

inline bool is_qutrit(const Scenario& s) { return s.subspace_name.value_or("S3") == "S3"; }

inline json crystal_json(const Scenario& s) {
  return {{"length", s.crystal.length},
          {"pump_wavevector", s.crystal.pump_wavevector},
          {"phase_matching", to_string(s.crystal.model)},
          {"gaussian_fit", s.crystal.gaussian_fit}};
}

inline json detection_json(const DetectionConfig& d) { return {{"waist", d.waist}, {"l_min", d.l_min}, {"l_max", d.l_max}}; }

inline json pairs_json(const Subspace& s) {
  json out = json::array();
  for (const auto& [a, b] : s) out.push_back({a, b});
  return out;
}

inline json state_json(const StateVector& psi) {
  const auto& v = psi.amplitudes();
  json re = json::array(), im = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    re.push_back(v(i).real());
    im.push_back(v(i).imag());
  }
  return {{"window", {psi.window().l_min, psi.window().l_max}}, {"amplitudes", {{"real", re}, {"imag", im}}}};
}

inline StateVector state_from_json(const json& j, const std::string& where) {
  const json& s = j.contains("state") ? j["state"] : j;
  try {
    const auto w = s.at("window");
    const OamWindow window{w.at(0).get<int>(), w.at(1).get<int>()};
    const auto& re = s.at("amplitudes").at("real");
    const auto& im = s.at("amplitudes").at("imag");
    const int n = window.dim() * window.dim();
    if (static_cast<int>(re.size()) != n || static_cast<int>(im.size()) != n) {
      throw ConfigError(where + ": state needs " + std::to_string(n) + " amplitudes");
    }
    Eigen::VectorXcd v(n);
    for (int i = 0; i < n; ++i) v(i) = {re[i].get<double>(), im[i].get<double>()};
    return StateVector::normalized(window, v);
  } catch (const json::exception& e) {
    throw ConfigError(where + ": malformed state file: " + e.what());
  }
}

inline json load_json(const std::filesystem::path& path) {
  try {
    return json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- spectrum

inline json spectrum_report(const Scenario& s, const PumpProfile& pump, const JointSpectrum& js) {
  json doc = io::document("spectrum");
  doc["scenario"] = s.name;
  doc["crystal"] = crystal_json(s);
  doc["pump"] = io::pump_json(pump);
  doc["detection"] = detection_json(s.detection);
  const Eigen::MatrixXd p = spiral_probabilities(js);
  doc["probabilities"] = io::matrix_json(p);
  doc["leakage"] = js.leakage();
  const auto comps = pump.components();
  if (comps.size() == 1) {
    const auto w = diagonal_weights(js, comps.front());
    doc["diagonal_weights"] = w;
    doc["k_az"] = azimuthal_schmidt_number(w);
  } else {
    doc["k_az"] = nullptr;
  }
  if (s.subspace_name) {
    doc["subspace"] = {{"name", *s.subspace_name},
                       {"pairs", pairs_json(s.subspace())},
                       {"probabilities", subspace_probabilities(js, s.subspace())}};
  }
  return doc;
}

inline int cmd_spectrum(Context& ctx) {
  const Scenario& s = ctx.scenario();
  const PumpProfile pump = s.pump();
  const JointSpectrum js = joint_amplitude(pump, s.crystal, s.detection);
  json doc = spectrum_report(s, pump, js);
  if (const auto shots = resolve_shots(ctx.options().shots, std::nullopt)) {
    auto rng = ctx.rng(Stage::spectrum);
    const Eigen::MatrixXd p = spiral_probabilities(js);
    Eigen::MatrixXd counts(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.size(); ++i) counts(i) = static_cast<double>(simulate_counts(p(i), {*shots, 1.0, 0.0}, rng).counts);
    doc["shots"] = *shots;
    ctx.write("spectrum_counts.csv", io::oam_matrix_csv(counts, js.l_min()));
  }
  doc["meta"] = ctx.meta();
  ctx.write("spectrum.csv", io::oam_matrix_csv(spiral_probabilities(js), js.l_min()));
  ctx.write("spectrum.json", io::dump(doc));
  if (doc["k_az"].is_number()) std::cout << "K_az = " << doc["k_az"].get<double>() << "\n";
  return 0;
}

// ---------------------------------------------------------------- optimize

struct OptimizeOutcome {
  OptimizationResult result;
  json report;
  std::vector<json> trace;
};

inline OptimizeOutcome run_optimize_stage(const Context& ctx) {
  const Scenario& s = ctx.scenario();
  const Subspace subspace = s.subspace();
  const SpectrumModel model(s.crystal, s.detection, s.pump_waist);
  const auto shots = resolve_shots(ctx.options().shots, s.optimize.shots);
  auto lab_rng = ctx.rng(Stage::lab);
  const LabOracle lab = simulated_lab(model, subspace, shots, shots ? &lab_rng : nullptr);
  const LabOracle exact = simulated_lab(model, subspace);

  SPSAConfig cfg = s.optimize.spsa;
  cfg.seed = ctx.stage_seed(Stage::spsa);
  OptimizationResult r = run_optimization(s.pump(), subspace, lab, cfg);

  std::vector<json> trace;
  for (const auto& it : r.trace.iterations) {
    trace.push_back({{"k", it.k},
                     {"params", std::vector<double>(it.params.data(), it.params.data() + it.params.size())},
                     {"cost_plus", it.cost_plus},
                     {"cost_minus", it.cost_minus},
                     {"cost", it.cost}});
  }

  const auto describe = [&](const PumpProfile& p) {
    const auto probs = exact(p);
    return json{{"coefficients", io::coefficients_json(p.coefficients())},
                {"exact_probabilities", probs},
                {"exact_cost", variance_cost(probs)}};
  };
  json rep;
  rep["subspace"] = {{"name", s.subspace_name.value_or("S3")}, {"pairs", pairs_json(subspace)}};
  rep["components"] = r.trace.components;
  rep["spsa"] = {{"a", cfg.a},
                 {"c", cfg.c},
                 {"alpha", cfg.alpha},
                 {"gamma", cfg.gamma},
                 {"stability", cfg.stability},
                 {"iterations", cfg.max_iterations},
                 {"seed", cfg.seed}};
  rep["shots"] = shots ? json(*shots) : json("exact");
  rep["initial"] = describe(s.pump());
  rep["initial"]["cost"] = r.trace.initial_cost;
  rep["final"] = describe(r.last);
  rep["final"]["cost"] = r.trace.final_cost();
  rep["best"] = describe(r.best);
  rep["best"]["cost"] = r.trace.best_cost();
  rep["best"]["iteration"] = r.trace.best_iteration;
  const auto costs = r.trace.costs();
  rep["cost_curve"] = costs;
  bool positive = costs.size() >= 2;
  for (double c : costs) positive = positive && c > 0.0;
  rep["exponential_rate"] = positive ? json(fit_exponential_rate(costs)) : json(nullptr);
  return {std::move(r), std::move(rep), std::move(trace)};
}

inline int cmd_optimize(Context& ctx) {
  ctx.scenario().optimize.enabled = true;
  auto outcome = run_optimize_stage(ctx);
  json doc = io::document("optimize");
  doc["scenario"] = ctx.scenario().name;
  doc.update(outcome.report);
  doc["meta"] = ctx.meta();
  doc["meta"]["optimizer_wall_seconds"] = outcome.result.trace.wall_seconds;
  const Scenario& s = ctx.scenario();
  const JointSpectrum js = joint_amplitude(outcome.result.last, s.crystal, s.detection);
  ctx.write("trace.jsonl", io::jsonl(outcome.trace));
  ctx.write("optimize.json", io::dump(doc));
  ctx.write("spectrum_final.csv", io::oam_matrix_csv(spiral_probabilities(js), js.l_min()));
  std::cout << "final cost = " << outcome.result.trace.final_cost() << " after " << outcome.trace.size() << " iterations\n";
  return 0;
}

// ---------------------------------------------------------------- tomography

inline std::vector<double> wrap_phases(std::vector<double> v) {
  for (auto& x : v) {
    x = std::remainder(x, 2.0 * std::numbers::pi);
    if (x <= -std::numbers::pi) x += 2.0 * std::numbers::pi;
  }
  return v;
}

struct TomographyOutcome {
  json report;
  Reconstruction fit;
  std::optional<std::vector<double>> phases;
};

// Reconstruction and derived quantities; `truth` adds fidelity and exact phases.
inline TomographyOutcome analyse_counts(const std::vector<double>& counts, const std::optional<DensityMatrix>& truth,
                                        const TomographyStage& stage, std::mt19937_64& boot_rng, std::uint64_t seed) {
  ReconstructOptions opt;
  opt.starts = stage.starts;
  opt.seed = seed;
  Reconstruction fit = reconstruct(counts, opt);
  const PureEstimate pure = closest_pure_state(fit.rho);
  json rep;
  rep["chi2"] = fit.chi2;
  rep["converged"] = fit.converged;
  rep["clamped"] = fit.clamped;
  rep["evaluations"] = fit.evaluations;
  rep["purity"] = purity(fit.rho);
  rep["lambda_max"] = pure.eigenvalue;
  rep["ambiguous"] = pure.ambiguous;
  rep["rho"] = io::complex_matrix_json(fit.rho.matrix());
  rep["closest_pure_state"] = state_json(pure.state);
  std::optional<std::vector<double>> phases;
  try {
    phases = extract_phases(pure.state, qutrit_subspace());
    rep["phases"] = *phases;
  } catch (const DomainError& e) {
    rep["phases"] = nullptr;
    rep["phases_note"] = e.what();
  }
  if (phases && stage.bootstrap >= 2) {
    const BootstrapResult b = bootstrap_errors(counts, stage.bootstrap, boot_rng, qutrit_subspace(), opt);
    rep["phase_errors"] = b.phase_std;
    rep["purity_error"] = b.purity_std;
    rep["lambda_max_error"] = b.eigenvalue_std;
    rep["bootstrap"] = {{"resamples", b.resamples}, {"failures", b.failures}};
  }
  if (truth) {
    rep["fidelity"] = fidelity(fit.rho, *truth);
    rep["true_purity"] = purity(*truth);
    const PureEstimate tp = closest_pure_state(*truth);
    try {
      rep["true_phases"] = extract_phases(tp.state, qutrit_subspace());
    } catch (const DomainError&) {
      rep["true_phases"] = nullptr;
    }
  }
  return {std::move(rep), std::move(fit), std::move(phases)};
}

// True qutrit-window state for the tomography and Bell stages.
inline StateVector source_state(const Context& ctx, const PumpProfile& pump, const std::string& choice) {
  const Scenario& s = ctx.scenario();
  if (choice == "max-ent") return maximally_entangled_qutrit();
  if (choice.empty() || choice == "spectrum") {
    if (!is_qutrit(s)) throw ConfigError("qutrit tomography and Bell tests need subspace S3");
    return state_from_spectrum(joint_amplitude(pump, s.crystal, s.detection), kQutritWindow);
  }
  const StateVector psi = state_from_json(load_json(choice), choice);
  if (!(psi.window() == kQutritWindow)) throw ConfigError(choice + ": state must live on the {-1, 0, 1} window");
  return psi;
}

// Rotation sweep: phases of every rotated state against theta_1 - 2 theta and
// theta_2 + 2 theta taken from the first entry.
inline json tomography_sweep(const Context& ctx, const PumpProfile& base, const std::string& state_choice, double noise,
                             std::vector<TomographyOutcome>* outcomes, std::vector<json>* count_lines) {
  const TomographyStage& stage = ctx.scenario().tomography;
  auto data_rng = ctx.rng(Stage::tomography);
  auto boot_rng = ctx.rng(Stage::bootstrap);
  const std::uint64_t fit_seed = ctx.stage_seed(Stage::tomography);
  json entries = json::array();
  std::optional<std::vector<double>> reference;
  std::optional<double> theta0;
  double worst_law = 0.0;
  for (const double theta : stage.rotations) {
    const PumpProfile pump = rotate_pump(base, theta);
    const StateVector psi = state_choice == "max-ent" && theta != 0.0
                                ? throw ConfigError("rotations need a spectrum-derived state")
                                : source_state(ctx, pump, state_choice);
    const DensityMatrix truth = apply_white_noise(psi, noise);
    const auto records = simulate_tomography_counts(truth, stage.counts, data_rng, fit_seed);
    std::vector<double> counts;
    for (const auto& r : records) counts.push_back(static_cast<double>(r.counts));
    if (count_lines) {
      for (auto line : io::count_records_json(records)) {
        line["rotation"] = theta;
        count_lines->push_back(std::move(line));
      }
    }
    TomographyOutcome out = analyse_counts(counts, truth, stage, boot_rng, fit_seed);
    out.report["rotation"] = theta;
    out.report["total_counts"] = stage.counts;
    if (out.phases) {
      if (!reference) {
        reference = out.report["true_phases"].is_array() ? out.report["true_phases"].get<std::vector<double>>() : *out.phases;
        theta0 = theta;
      }
      const double d = theta - *theta0;
      const auto law = wrap_phases({(*reference)[0] - 2.0 * d, 0.0, (*reference)[2] + 2.0 * d});
      std::vector<double> dev(3);
      for (int k = 0; k < 3; ++k) {
        dev[k] = std::abs(std::remainder((*out.phases)[k] - law[k], 2.0 * std::numbers::pi));
        worst_law = std::max(worst_law, dev[k]);
      }
      out.report["law_phases"] = law;
      out.report["law_deviation"] = dev;
    }
    entries.push_back(out.report);
    if (outcomes) outcomes->push_back(std::move(out));
  }
  return {{"entries", entries}, {"max_law_deviation", worst_law}};
}

inline int cmd_tomo(Context& ctx) {
  ctx.scenario().tomography.enabled = true;
  const auto& opt = ctx.options();
  const double noise = opt.noise.value_or(1.0);
  if (noise < 0.0 || noise > 1.0) throw ConfigError("--noise must lie in [0, 1]");
  json doc = io::document("tomography");
  doc["scenario"] = ctx.scenario().name;
  std::vector<TomographyOutcome> outcomes;
  if (!opt.counts.empty()) {
    const auto records = io::read_counts(opt.counts);
    if (records.size() != static_cast<std::size_t>(kTomoSettings)) {
      throw ConfigError(opt.counts.string() + ": expected " + std::to_string(kTomoSettings) + " count records, found " +
                        std::to_string(records.size()));
    }
    std::vector<double> counts;
    for (const auto& r : records) counts.push_back(static_cast<double>(r.counts));
    auto boot_rng = ctx.rng(Stage::bootstrap);
    outcomes.push_back(analyse_counts(counts, std::nullopt, ctx.scenario().tomography, boot_rng, ctx.stage_seed(Stage::tomography)));
    doc["source"] = opt.counts.string();
    doc["entries"] = json::array({outcomes.back().report});
  } else {
    std::vector<json> lines;
    const std::string choice = opt.state.empty() ? ctx.scenario().bell.state : opt.state;
    doc["source"] = choice;
    doc["noise"] = noise;
    doc.update(tomography_sweep(ctx, ctx.scenario().pump(), choice, noise, &outcomes, &lines));
    ctx.write("counts.jsonl", io::jsonl(lines));
  }
  doc["meta"] = ctx.meta();
  for (std::size_t k = 0; k < outcomes.size(); ++k) {
    const std::string suffix = outcomes.size() > 1 ? "_" + std::to_string(k) : "";
    ctx.write("rho_real" + suffix + ".csv", io::matrix_csv(outcomes[k].fit.rho.matrix().real()));
    ctx.write("rho_imag" + suffix + ".csv", io::matrix_csv(outcomes[k].fit.rho.matrix().imag()));
  }
  ctx.write("tomography.json", io::dump(doc));
  for (const auto& e : doc["entries"]) {
    std::cout << "purity = " << e["purity"].get<double>();
    if (e.contains("fidelity")) std::cout << ", fidelity = " << e["fidelity"].get<double>();
    std::cout << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- bell

inline json table_json(const OutcomeTable& t) {
  json blocks = json::object();
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) blocks["A" + std::to_string(a + 1) + "B" + std::to_string(b + 1)] = io::matrix_json(t.blocks[a][b]);
  }
  return blocks;
}

// I3 for a state, exact or from simulated counts, with optional phase
// correction (phi_minus, phi_plus) on the settings.
inline json bell_report(const DensityMatrix& rho, std::optional<double> counts, std::mt19937_64* rng,
                        std::optional<std::pair<double, double>> correction) {
  const CGLMPSettings settings = correction ? cglmp_bases(correction->first, correction->second) : cglmp_bases();
  OutcomeTable table = joint_outcome_table(rho, settings);
  json rep;
  rep["exact_i3"] = bell_i3(table);
  if (counts) {
    table = outcome_table_from_counts(simulate_bell_counts(table, {*counts, 1.0, 0.0}, *rng));
    rep["counts_per_projection"] = *counts;
  }
  const I3Terms terms = bell_i3_terms(table);
  rep["i3"] = terms.value;
  rep["positive_terms"] = terms.positive;
  rep["negative_terms"] = terms.negative;
  rep["table"] = table_json(table);
  if (correction) rep["phase_correction"] = {correction->first, correction->second};
  return rep;
}

inline json gamma_scan_json() {
  const GammaScanResult g = gamma_scan();
  return {{"gamma", g.gamma}, {"i3", g.i3}, {"grid", g.grid}, {"values", g.values}};
}

inline int cmd_bell(Context& ctx) {
  const Scenario& s = ctx.scenario();
  const auto& opt = ctx.options();
  const double noise = opt.noise.value_or(s.bell.noise);
  if (noise < 0.0 || noise > 1.0) throw ConfigError("--noise must lie in [0, 1]");
  const std::string choice = opt.state.empty() ? s.bell.state : opt.state;
  const StateVector psi = s.bell.gamma && opt.state.empty() ? gamma_state(*s.bell.gamma) : source_state(ctx, s.pump(), choice);
  const auto counts = resolve_shots(opt.shots, s.bell.counts);
  std::optional<std::mt19937_64> rng;
  if (counts) rng = ctx.rng(Stage::bell);

  json doc = io::document("bell");
  doc["scenario"] = s.name;
  doc["state"] = state_json(psi);
  doc["noise"] = noise;
  const DensityMatrix rho = apply_white_noise(psi, noise);
  doc["uncorrected"] = bell_report(rho, counts, rng ? &*rng : nullptr, std::nullopt);
  // Phase-corrected settings from the state's own phases, as tomography would supply them.
  try {
    const auto ph = extract_phases(psi, qutrit_subspace());
    doc["corrected"] = bell_report(rho, counts, rng ? &*rng : nullptr, std::make_pair(ph[0], ph[2]));
  } catch (const DomainError& e) {
    doc["corrected"] = nullptr;
  }
  if (opt.gamma_scan || s.bell.gamma_scan) doc["gamma_scan"] = gamma_scan_json();
  doc["meta"] = ctx.meta();
  ctx.write("bell.json", io::dump(doc));
  const json& best = doc["corrected"].is_null() ? doc["uncorrected"] : doc["corrected"];
  std::cout << "I3 = " << best["i3"].get<double>() << "\n";
  if (doc.contains("gamma_scan")) {
    std::cout << "gamma* = " << doc["gamma_scan"]["gamma"].get<double>() << " (I3 = " << doc["gamma_scan"]["i3"].get<double>() << ")\n";
  }
  return 0;
}

// ---------------------------------------------------------------- mask

inline PumpProfile pump_from_coefficients_file(const std::filesystem::path& path, double waist) {
  const json j = load_json(path);
  const json* c = nullptr;
  if (j.contains("coefficients")) {
    c = &j["coefficients"];
  } else if (j.contains("final") && j["final"].contains("coefficients")) {
    c = &j["final"]["coefficients"];
  } else if (j.contains("pump") && j["pump"].contains("coefficients")) {
    c = &j["pump"]["coefficients"];
  }
  if (!c) throw ConfigError(path.string() + ": no coefficients found");
  try {
    return PumpProfile::normalized(waist, io::coefficients_from_json(*c));
  } catch (const DomainError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

struct MaskOutcome {
  json report;
};

// Encodes the pump and detection masks; `verify` runs the diffraction oracle.
inline MaskOutcome run_mask_stage(const Context& ctx, const PumpProfile& pump, bool verify, bool write_files) {
  const MaskStage& m = ctx.scenario().mask;
  const MaskConfig& cfg = m.config;
  json rep;
  rep["config"] = io::mask_config_json(cfg);
  rep["mode_waist"] = m.mode_waist;

  const Field pump_field = pump_mask_field(pump, cfg, m.mode_waist);
  const PhaseMask pump_mask = encode_mask(pump_field, cfg);
  json pump_rep = {{"file", "pump_mask.pgm"}, {"coefficients", io::coefficients_json(pump.coefficients())}};
  if (verify) pump_rep["overlap"] = field_overlap(diffraction_oracle(pump_mask).first_order, pump_field);
  if (write_files) {
    ctx.write("pump_mask.pgm", io::mask_pgm(pump_mask));
    json side = io::document("mask");
    side["role"] = "pump";
    side["config"] = rep["config"];
    side["mode_waist"] = m.mode_waist;
    side["coefficients"] = pump_rep["coefficients"];
    ctx.write("pump_mask.json", io::dump(side));
  }
  rep["pump"] = pump_rep;

  // Detection masks see the back-propagated fiber mode, a Gaussian matched to
  // the waist ratio unless the scenario fixes the incident waist.
  MaskConfig det_cfg = cfg;
  if (std::isinf(det_cfg.incident_waist)) det_cfg.incident_waist = incident_waist_for_ratio(m.detection_waist);
  json det = json::array();
  for (const int l : m.detection_modes) {
    const std::string name = "detection_l" + std::to_string(l);
    const Field field = detection_mask_field(l, m.detection_waist, cfg);
    const PhaseMask mask = encode_mask(field, cfg);
    json d = {{"l", l}, {"file", name + ".pgm"}, {"waist_ratio", kDetectionWaistRatio}, {"target_waist", m.detection_waist}};
    if (verify) {
      const Field ideal = lg_field(l, m.detection_waist, cfg);
      d["incident_waist"] = det_cfg.incident_waist;
      d["overlap"] = round_trip_overlap(field, ideal, det_cfg);
      d["unmodified_overlap"] = round_trip_overlap(lg_field(l, m.detection_waist, cfg), ideal, det_cfg);
    }
    if (write_files) {
      ctx.write(name + ".pgm", io::mask_pgm(mask));
      json side = io::document("mask");
      side["role"] = "detection";
      side["config"] = rep["config"];
      side["l"] = l;
      side["waist_ratio"] = kDetectionWaistRatio;
      side["target_waist"] = m.detection_waist;
      ctx.write(name + ".json", io::dump(side));
    }
    det.push_back(std::move(d));
  }
  rep["detection"] = det;
  return {std::move(rep)};
}

inline int cmd_mask(Context& ctx) {
  const auto& opt = ctx.options();
  const bool verify = opt.verify || ctx.scenario().mask.verify;
  const PumpProfile pump =
      opt.coefficients.empty() ? ctx.scenario().pump() : pump_from_coefficients_file(opt.coefficients, ctx.scenario().pump_waist);
  auto outcome = run_mask_stage(ctx, pump, verify, true);
  if (verify) {
    json doc = io::document("mask_report");
    doc["scenario"] = ctx.scenario().name;
    doc.update(outcome.report);
    doc["meta"] = ctx.meta();
    ctx.write("mask_report.json", io::dump(doc));
    std::cout << "pump mask overlap = " << outcome.report["pump"]["overlap"].get<double>() << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- pipeline

inline int cmd_pipeline(Context& ctx) {
  const Scenario& s = ctx.scenario();
  json doc = io::document("pipeline");
  doc["scenario"] = s.name;
  doc["seed"] = s.seed ? json(*s.seed) : json(nullptr);
  doc["subspace"] = s.subspace_name.value_or("S3");
  json meta_extra = json::object();

  PumpProfile pump = s.pump();
  if (s.optimize.enabled) {
    auto outcome = run_optimize_stage(ctx);
    doc["optimize"] = outcome.report;
    meta_extra["optimizer_wall_seconds"] = outcome.result.trace.wall_seconds;
    ctx.write("trace.jsonl", io::jsonl(outcome.trace));
    pump = outcome.result.last;
  } else {
    doc["optimize"] = {{"skipped", "optimize stage disabled"}};
  }
  doc["pump"] = io::pump_json(pump);
  const JointSpectrum js = joint_amplitude(pump, s.crystal, s.detection);
  doc["spectrum"] = {{"subspace_probabilities", subspace_probabilities(js, s.subspace())},
                     {"subspace_cost", variance_cost(subspace_probabilities(js, s.subspace()))}};
  ctx.write("spectrum.csv", io::oam_matrix_csv(spiral_probabilities(js), js.l_min()));

  std::optional<std::vector<double>> phases;
  if (s.tomography.enabled && is_qutrit(s)) {
    std::vector<TomographyOutcome> outcomes;
    doc["tomography"] = tomography_sweep(ctx, pump, "spectrum", 1.0, &outcomes, nullptr);
    if (!outcomes.empty()) phases = outcomes.front().phases;
  } else {
    doc["tomography"] = {{"skipped", s.tomography.enabled ? "tomography needs subspace S3" : "tomography stage disabled"}};
  }
  doc["phases"] = phases ? json(*phases) : json(nullptr);

  if (s.bell.enabled && is_qutrit(s)) {
    const StateVector psi = source_state(ctx, pump, s.bell.state);
    const DensityMatrix rho = apply_white_noise(psi, s.bell.noise);
    std::optional<std::mt19937_64> rng;
    if (s.bell.counts) rng = ctx.rng(Stage::bell);
    json bell;
    bell["uncorrected"] = bell_report(rho, s.bell.counts, rng ? &*rng : nullptr, std::nullopt);
    if (phases) {
      bell["corrected"] = bell_report(rho, s.bell.counts, rng ? &*rng : nullptr, std::make_pair((*phases)[0], (*phases)[2]));
    } else {
      bell["corrected"] = {{"skipped", "no tomography phases"}};
    }
    if (s.bell.gamma_scan) bell["gamma_scan"] = gamma_scan_json();
    doc["bell"] = bell;
  } else {
    doc["bell"] = {{"skipped", s.bell.enabled ? "Bell test needs subspace S3" : "bell stage disabled"}};
  }

  if (s.mask.enabled) {
    doc["mask"] = run_mask_stage(ctx, pump, true, true).report;
  } else {
    doc["mask"] = {{"skipped", "mask stage disabled"}};
  }

  doc["meta"] = ctx.meta();
  doc["meta"].update(meta_extra);
  ctx.write("summary.json", io::dump(doc));
  std::cout << "wrote " << (ctx.out() / "summary.json").string() << "\n";
  return 0;
}

}  // namespace pumpshaper::cli
