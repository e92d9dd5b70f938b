#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "pumpshaper/detection.hpp"
#include "pumpshaper/errors.hpp"
#include "pumpshaper/holograms.hpp"
#include "pumpshaper/modes.hpp"

namespace pumpshaper::io {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

inline json complex_json(cplx z) { return json::array({z.real(), z.imag()}); }

inline json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json complex_matrix_json(const Eigen::MatrixXcd& m) {
  return {{"real", matrix_json(m.real())}, {"imag", matrix_json(m.imag())}};
}

// {"-2": [re, im], ...}; keys are decimal OAM indices.
inline json coefficients_json(const CoefficientMap& coefficients) {
  json out = json::object();
  for (const auto& [l, a] : coefficients) out[std::to_string(l)] = complex_json(a);
  return out;
}

inline CoefficientMap coefficients_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("coefficients must be an object keyed by OAM index");
  CoefficientMap out;
  for (const auto& [key, value] : j.items()) {
    int l = 0;
    std::size_t used = 0;
    try {
      l = std::stoi(key, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != key.size()) throw ConfigError("coefficient key '" + key + "' is not an integer");
    if (!value.is_array() || value.size() != 2 || !value[0].is_number() || !value[1].is_number()) {
      throw ConfigError("coefficient " + key + " must be [re, im]");
    }
    out[l] = {value[0].get<double>(), value[1].get<double>()};
  }
  return out;
}

inline json pump_json(const PumpProfile& pump) {
  return {{"waist", pump.waist()}, {"rotation", pump.rotation()}, {"coefficients", coefficients_json(pump.coefficients())}};
}

// Writes `content` to `path`, creating parent directories. Existing files are
// kept unless `force`.
inline void write_file(const std::filesystem::path& path, const std::string& content, bool force) {
  if (std::filesystem::exists(path) && !force) {
    throw ConfigError("refusing to overwrite " + path.string() + " (use --force)");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw ConfigError("failed writing " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Top-level JSON document; the schema version leads every record.
inline json document(const std::string& kind) { return {{"schema_version", kSchemaVersion}, {"kind", kind}}; }

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline std::string jsonl(const std::vector<json>& records) {
  std::string out;
  for (const auto& r : records) {
    json line = {{"schema_version", kSchemaVersion}};
    line.update(r);
    out += line.dump() + "\n";
  }
  return out;
}

// Square matrix indexed by OAM from `l_min`; first row and column label l.
inline std::string oam_matrix_csv(const Eigen::MatrixXd& m, int l_min) {
  std::ostringstream out;
  out.precision(17);
  out << "# schema_version=" << kSchemaVersion << "\n";
  out << "l_s\\l_i";
  for (Eigen::Index c = 0; c < m.cols(); ++c) out << "," << l_min + c;
  out << "\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out << l_min + r;
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << "," << m(r, c);
    out << "\n";
  }
  return out.str();
}

inline std::string matrix_csv(const Eigen::MatrixXd& m) {
  std::ostringstream out;
  out.precision(17);
  out << "# schema_version=" << kSchemaVersion << "\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m(r, c);
    out << "\n";
  }
  return out.str();
}

// Binary 8-bit PGM, phase 0 -> 0 and 2 pi -> 255.
inline std::string mask_pgm(const PhaseMask& mask) {
  std::ostringstream out;
  out << "P5\n# schema_version=" << kSchemaVersion << "\n" << mask.phase.cols() << " " << mask.phase.rows() << "\n255\n";
  std::string pixels;
  pixels.reserve(static_cast<std::size_t>(mask.phase.size()));
  for (Eigen::Index r = 0; r < mask.phase.rows(); ++r) {
    for (Eigen::Index c = 0; c < mask.phase.cols(); ++c) {
      const double v = std::round(mask.phase(r, c) / (2.0 * std::numbers::pi) * 255.0);
      pixels.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(v, 0.0, 255.0))));
    }
  }
  return out.str() + pixels;
}

inline json mask_config_json(const MaskConfig& cfg) {
  json j = {{"width", cfg.width},
            {"height", cfg.height},
            {"pitch", cfg.pitch},
            {"grating_period", cfg.grating_period}};
  j["incident_waist"] = std::isinf(cfg.incident_waist) ? json("plane") : json(cfg.incident_waist);
  return j;
}

inline std::vector<json> count_records_json(const std::vector<CountRecord>& records) {
  std::vector<json> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    out.push_back({{"id", r.id},
                   {"counts", r.counts},
                   {"exposure", r.exposure},
                   {"expected_rate", r.expected_rate},
                   {"seed", r.seed}});
  }
  return out;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::int64_t parse_count(const std::string& field, const std::string& where) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(field, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (field.empty() || used != field.size()) throw ConfigError(where + ": count '" + field + "' is not an integer");
  if (v < 0) throw ConfigError(where + ": count is negative");
  return v;
}

}  // namespace detail

// Counts as `id,counts` CSV (blank lines, '#' comments and an `id,counts`
// header allowed) or as JSON lines with "id" and "counts". Errors name the
// offending line.
inline std::vector<CountRecord> read_counts(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  const bool as_jsonl = path.extension() == ".jsonl";
  std::vector<CountRecord> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string where = path.string() + ":" + std::to_string(number);
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    CountRecord rec;
    if (as_jsonl) {
      json j;
      try {
        j = json::parse(t);
      } catch (const json::parse_error& e) {
        throw ConfigError(where + ": " + e.what());
      }
      if (!j.is_object() || !j.contains("counts") || !j["counts"].is_number_integer()) {
        throw ConfigError(where + ": record needs an integer \"counts\" field");
      }
      rec.id = j.value("id", std::string{});
      rec.counts = j["counts"].get<std::int64_t>();
      if (rec.counts < 0) throw ConfigError(where + ": count is negative");
    } else {
      const auto comma = t.find(',');
      if (comma == std::string::npos) throw ConfigError(where + ": expected 'id,counts'");
      rec.id = detail::trim(t.substr(0, comma));
      const std::string field = detail::trim(t.substr(comma + 1));
      if (out.empty() && rec.id == "id" && field == "counts") continue;
      if (field.find(',') != std::string::npos) throw ConfigError(where + ": expected exactly two fields");
      rec.counts = detail::parse_count(field, where);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace pumpshaper::io
