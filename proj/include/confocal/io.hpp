#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "confocal/device.hpp"
#include "confocal/errors.hpp"
#include "confocal/geometry.hpp"
#include "confocal/imaging.hpp"
#include "confocal/lock_analysis.hpp"
#include "confocal/mask.hpp"
#include "confocal/pump.hpp"
#include "confocal/spectrum.hpp"

namespace confocal::io {

namespace fs = std::filesystem;

// Every number written by this module goes through here, so outputs are byte-stable.
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9e", v);
  return buf;
}

namespace detail {

inline std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  return out;
}

inline std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return in;
}

inline double parse_number(const std::string& tok, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    throw FormatError(where + ": '" + tok + "' is not a number");
  }
  if (used != tok.size()) throw FormatError(where + ": '" + tok + "' is not a number");
  if (!std::isfinite(v)) throw FormatError(where + ": non-finite value '" + tok + "'");
  return v;
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

// ---------------------------------------------------------------------------------------
// Mask files
//
//   MASK v1 <width> <height> <pitch_um>
//   <height lines of width amplitudes; line j holds pixels (0..width-1, j)>
//   PHASE                      (optional)
//   <height lines of width phases in radians>

inline void emit_mask(const TransmissionMask& mask, std::ostream& out) {
  validate(mask);
  const GridSpec& g = mask.grid;
  out << "MASK v1 " << g.width << ' ' << g.height << ' ' << fmt(g.pitch_um) << '\n';
  auto block = [&](const Eigen::MatrixXd& m) {
    for (int j = 0; j < g.height; ++j) {
      for (int i = 0; i < g.width; ++i) {
        if (i) out << ' ';
        out << fmt(m(i, j));
      }
      out << '\n';
    }
  };
  block(mask.amplitude);
  if (mask.phase.size() != 0) {
    out << "PHASE\n";
    block(mask.phase);
  }
}

inline void emit_mask(const TransmissionMask& mask, const fs::path& path) {
  auto out = detail::open_out(path);
  emit_mask(mask, out);
}

inline TransmissionMask read_mask(std::istream& in, const std::string& name = "mask") {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(name + ": empty file");
  std::istringstream head(line);
  std::string magic, version, extra;
  long w = 0, h = 0;
  std::string pitch_tok;
  if (!(head >> magic >> version >> w >> h >> pitch_tok) || magic != "MASK" || version != "v1" || (head >> extra)) {
    throw FormatError(name + ": malformed header '" + detail::trim(line) + "'; expected 'MASK v1 <width> <height> <pitch_um>'");
  }
  const double pitch = detail::parse_number(pitch_tok, name + " header");
  if (w <= 0 || h <= 0 || !(pitch > 0.0)) throw FormatError(name + ": header sizes and pitch must be positive");
  TransmissionMask m{{static_cast<int>(w), static_cast<int>(h), pitch}, Eigen::MatrixXd(w, h), {}, name};
  int lineno = 1;
  auto block = [&](Eigen::MatrixXd& dst, const char* what) {
    for (long j = 0; j < h; ++j) {
      ++lineno;
      if (!std::getline(in, line)) {
        throw FormatError(name + ": " + what + " block ends after " + std::to_string(j) + " of " + std::to_string(h) + " rows");
      }
      std::istringstream row(line);
      std::string tok;
      long i = 0;
      while (row >> tok) {
        if (i >= w) throw FormatError(name + ":" + std::to_string(lineno) + ": more than " + std::to_string(w) + " values");
        dst(i, j) = detail::parse_number(tok, name + ":" + std::to_string(lineno));
        ++i;
      }
      if (i != w) {
        throw FormatError(name + ":" + std::to_string(lineno) + ": " + std::to_string(i) + " values, header says " +
                          std::to_string(w));
      }
    }
  };
  block(m.amplitude, "amplitude");
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (t != "PHASE") throw FormatError(name + ":" + std::to_string(lineno) + ": unexpected content after amplitude block");
    m.phase.resize(w, h);
    block(m.phase, "phase");
    while (std::getline(in, line)) {
      ++lineno;
      if (!detail::trim(line).empty()) throw FormatError(name + ":" + std::to_string(lineno) + ": trailing content");
    }
    break;
  }
  try {
    validate(m);
  } catch (const Error& e) {
    throw FormatError(name + ": " + e.what());
  }
  return m;
}

inline TransmissionMask load_mask(const fs::path& path) {
  auto in = detail::open_in(path);
  return read_mask(in, path.filename().string());
}

// ---------------------------------------------------------------------------------------
// Two-column CSV: mandatory header, comma separator, '#' comment lines ignored.

struct Table {
  std::string x_name, y_name;
  std::vector<double> x, y;
};

inline Table read_table(std::istream& in, const std::string& name) {
  Table t;
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = detail::trim(line);
    if (s.empty() || s[0] == '#') continue;
    const auto comma = s.find(',');
    if (comma == std::string::npos || s.find(',', comma + 1) != std::string::npos) {
      throw FormatError(name + ":" + std::to_string(lineno) + ": expected two comma-separated columns");
    }
    const std::string a = detail::trim(s.substr(0, comma)), b = detail::trim(s.substr(comma + 1));
    if (!header) {
      double probe;
      if (std::istringstream(a) >> probe) throw FormatError(name + ": missing header line");
      t.x_name = a;
      t.y_name = b;
      header = true;
      continue;
    }
    const std::string where = name + ":" + std::to_string(lineno);
    t.x.push_back(detail::parse_number(a, where));
    t.y.push_back(detail::parse_number(b, where));
  }
  if (!header) throw FormatError(name + ": missing header line");
  return t;
}

inline void write_table(std::ostream& out, const std::string& x_name, const std::string& y_name,
                        const std::vector<double>& x, const std::vector<double>& y) {
  out << x_name << ',' << y_name << '\n';
  for (std::size_t i = 0; i < x.size(); ++i) out << fmt(x[i]) << ',' << fmt(y[i]) << '\n';
}

struct LoadedTrace {
  std::optional<NoiseTrace> trace;  // time_s,volts
  std::optional<PSDSpec> psd;       // freq_Hz,density
};

inline LoadedTrace read_trace(std::istream& in, const std::string& name = "trace") {
  const Table t = read_table(in, name);
  LoadedTrace out;
  if (t.x_name == "time_s" && t.y_name == "volts") {
    if (t.x.size() < 2) throw FormatError(name + ": trace needs at least two samples");
    const double dt = (t.x.back() - t.x.front()) / static_cast<double>(t.x.size() - 1);
    if (!(dt > 0.0)) throw FormatError(name + ": time column must increase");
    for (std::size_t i = 1; i < t.x.size(); ++i) {
      if (std::abs(t.x[i] - t.x[i - 1] - dt) > 1e-3 * dt) {
        throw FormatError(name + ": samples are not uniformly spaced near t = " + fmt(t.x[i]));
      }
    }
    out.trace = NoiseTrace{1.0 / dt, t.y, name};
  } else if (t.x_name == "freq_Hz" && t.y_name == "density") {
    PSDSpec p;
    p.frequency_hz = t.x;
    p.density = t.y;
    for (std::size_t i = 1; i < p.frequency_hz.size(); ++i)
      if (!(p.frequency_hz[i] > p.frequency_hz[i - 1])) throw FormatError(name + ": frequency column must increase");
    for (double d : p.density)
      if (d < 0.0) throw FormatError(name + ": negative spectral density");
    out.psd = std::move(p);
  } else {
    throw FormatError(name + ": header '" + t.x_name + "," + t.y_name +
                      "' is neither 'time_s,volts' nor 'freq_Hz,density'");
  }
  return out;
}

inline LoadedTrace load_trace(const fs::path& path) {
  auto in = detail::open_in(path);
  return read_trace(in, path.filename().string());
}

inline void emit_trace(const NoiseTrace& t, const fs::path& path) {
  auto out = detail::open_out(path);
  std::vector<double> time(t.samples.size());
  for (std::size_t i = 0; i < time.size(); ++i) time[i] = i / t.sample_rate_hz;
  write_table(out, "time_s", "volts", time, t.samples);
}

inline void emit_psd(const PSDSpec& p, const fs::path& path) {
  auto out = detail::open_out(path);
  out << "# one-sided density, " << p.units << "^2/Hz; window " << to_string(p.window) << ", segment "
      << p.segment_length << ", overlap " << fmt(p.overlap) << ", segments " << p.segments << '\n';
  write_table(out, "freq_Hz", "density", p.frequency_hz, p.density);
}

inline void emit_spectrum(const Spectrum& s, const fs::path& path) {
  auto out = detail::open_out(path);
  write_table(out, "offset_Hz", "transmission", s.frequency_hz, s.transmission);
}

// 16-bit binary graymap scaled to the image maximum. The first row is the highest y.
inline void emit_pgm(const ImageGrid& img, const fs::path& path) {
  auto out = detail::open_out(path);
  const GridSpec& g = img.grid;
  out << "P5\n" << g.width << ' ' << g.height << "\n65535\n";
  const double top = img.intensity.maxCoeff();
  std::vector<char> row(2 * static_cast<std::size_t>(g.width));
  for (int j = g.height - 1; j >= 0; --j) {
    for (int i = 0; i < g.width; ++i) {
      const double v = top > 0.0 ? img.intensity(i, j) / top : 0.0;
      const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
      row[2 * i] = static_cast<char>(q >> 8);
      row[2 * i + 1] = static_cast<char>(q & 0xff);
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

inline void emit_image_csv(const ImageGrid& img, const fs::path& path) {
  auto out = detail::open_out(path);
  out << "x_um,y_um,intensity\n";
  for (int j = 0; j < img.grid.height; ++j)
    for (int i = 0; i < img.grid.width; ++i)
      out << fmt(img.grid.x_um(i)) << ',' << fmt(img.grid.y_um(j)) << ',' << fmt(img.intensity(i, j)) << '\n';
}

// Plain-text report: "key = value unit" lines plus free-form summary lines.
class Report {
 public:
  explicit Report(std::string title) : title_(std::move(title)) {}

  void add(const std::string& key, double value, const std::string& unit = "") {
    lines_.push_back(key + " = " + fmt(value) + (unit.empty() ? "" : " " + unit));
  }
  void add(const std::string& key, const std::string& value) { lines_.push_back(key + " = " + value); }
  void note(const std::string& text) { lines_.push_back("# " + text); }

  std::string str() const {
    std::string s = "# " + title_ + "\n";
    for (const auto& l : lines_) s += l + "\n";
    return s;
  }
  void write(const fs::path& path) const {
    auto out = detail::open_out(path);
    out << str();
  }

 private:
  std::string title_;
  std::vector<std::string> lines_;
};

// ---------------------------------------------------------------------------------------
// Scenario files (JSON). Physical quantities carry their unit as a key suffix.

struct NamedPoint {
  std::string name;
  Point point;
};

struct Scenario {
  fs::path source;
  CavityGeometry geometry;
  int max_order = 20;
  Family family = Family::even;
  int grid_pixels = 512;
  std::optional<double> grid_pitch_um;
  std::optional<fs::path> mask_path;
  PumpSpec pump;
  std::optional<fs::path> pump_path;
  LeadsDevice device;
  struct Analysis {
    double range_start_hz = -7.5e9;
    double range_stop_hz = 7.5e9;
    int bins = 15001;
    SpectrumModel model = SpectrumModel::automatic;
    std::vector<NamedPoint> positions;
    int imaging_max_order = 40;
    std::optional<double> illumination_waist_um;  // uniform illumination when absent
    std::optional<fs::path> trace_path;
    std::size_t segment_length = 16384;
    double overlap = 0.5;
    Window window = Window::hann;
    double band_low_hz = 30.0;
    double band_high_hz = 1e5;
    double slope_v_per_hz = 1e-7;
    double bare_rms_hz = 4.25e6;
    std::optional<fs::path> drive_path;
    std::vector<double> peak_voltages_v;
    double drive_frequency_hz = 0.0;
    std::optional<double> response_sigma_hz;
  } analysis;
  DominantModeOptions solver;
  fs::path output_dir = "out";
};

namespace detail {

using nlohmann::json;

const std::vector<std::string> kUnitSuffixes{"_mm", "_um", "_nm", "_m", "_hz", "_v", "_deg", "_px"};

class Validator {
 public:
  explicit Validator(fs::path base) : base_(std::move(base)) {}

  std::vector<std::string> violations;

  // Rejects keys outside `allowed`, pointing at the intended key when only the unit suffix
  // is missing or different.
  void check_keys(const json& obj, const std::string& block, const std::set<std::string>& allowed) {
    if (!obj.is_object()) {
      violations.push_back(block + ": expected an object");
      return;
    }
    for (const auto& [key, value] : obj.items()) {
      if (allowed.count(key)) continue;
      std::string hint;
      const std::string stem = strip_suffix(key);
      for (const auto& a : allowed) {
        if (strip_suffix(a) == stem && a != stem) hint = "; did you mean '" + a + "' (unit suffix required)?";
      }
      violations.push_back(block + "." + key + ": unknown key" + hint);
    }
  }

  template <typename T>
  std::optional<T> get(const json& obj, const std::string& block, const std::string& key) {
    if (!obj.is_object() || !obj.contains(key)) return std::nullopt;
    try {
      return obj.at(key).get<T>();
    } catch (const std::exception&) {
      violations.push_back(block + "." + key + ": wrong type");
      return std::nullopt;
    }
  }

  void number(const json& obj, const std::string& block, const std::string& key, double& dst, double lo, double hi,
              bool lo_open = false, bool hi_open = false) {
    if (!obj.is_object() || !obj.contains(key)) return;
    if (!obj.at(key).is_number()) {
      violations.push_back(block + "." + key + ": expected a number");
      return;
    }
    const double v = obj.at(key).get<double>();
    const bool ok = (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi) && std::isfinite(v);
    if (!ok) {
      violations.push_back(block + "." + key + ": value " + fmt(v) + " outside " + (lo_open ? "(" : "[") + fmt(lo) +
                           ", " + fmt(hi) + (hi_open ? ")" : "]"));
      return;
    }
    dst = v;
  }

  void integer(const json& obj, const std::string& block, const std::string& key, int& dst, int lo, int hi) {
    if (!obj.is_object() || !obj.contains(key)) return;
    if (!obj.at(key).is_number_integer()) {
      violations.push_back(block + "." + key + ": expected an integer");
      return;
    }
    const long v = obj.at(key).get<long>();
    if (v < lo || v > hi) {
      violations.push_back(block + "." + key + ": value " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
                           std::to_string(hi) + "]");
      return;
    }
    dst = static_cast<int>(v);
  }

  std::optional<fs::path> file(const json& obj, const std::string& block, const std::string& key) {
    const auto s = get<std::string>(obj, block, key);
    if (!s) return std::nullopt;
    fs::path p(*s);
    if (p.is_relative()) p = base_ / p;
    if (!fs::is_regular_file(p)) {
      violations.push_back(block + "." + key + ": file '" + p.string() + "' does not exist");
      return std::nullopt;
    }
    return p;
  }

  template <typename E>
  void choice(const json& obj, const std::string& block, const std::string& key, E& dst,
              const std::map<std::string, E>& options) {
    const auto s = get<std::string>(obj, block, key);
    if (!s) return;
    const auto it = options.find(*s);
    if (it == options.end()) {
      std::string list;
      for (const auto& [k, v] : options) list += (list.empty() ? "" : ", ") + k;
      violations.push_back(block + "." + key + ": '" + *s + "' is not one of {" + list + "}");
      return;
    }
    dst = it->second;
  }

  const fs::path& base() const { return base_; }

 private:
  static std::string strip_suffix(const std::string& key) {
    for (const auto& s : kUnitSuffixes)
      if (key.size() > s.size() && key.compare(key.size() - s.size(), s.size(), s) == 0) return key.substr(0, key.size() - s.size());
    return key;
  }
  fs::path base_;
};

}  // namespace detail

inline Scenario parse_scenario_json(const nlohmann::json& root, const fs::path& source) {
  using detail::json;
  Scenario sc;
  sc.source = source;
  detail::Validator v(source.has_parent_path() ? source.parent_path() : fs::path("."));
  v.check_keys(root, "scenario", {"name", "geometry", "basis", "mask_path", "pump", "device", "analysis", "solver", "output_dir"});
  v.get<std::string>(root, "scenario", "name");

  const json none = json::object();
  const json& geo = root.contains("geometry") ? root.at("geometry") : none;
  v.check_keys(geo, "geometry",
               {"mirror_radius_mm", "cavity_length_mm", "reflectivity_upper", "reflectivity_lower", "wavelength_nm",
                "excess_loss_per_roundtrip", "target_finesse", "sample_tilt_deg"});
  CavityGeometry& g = sc.geometry;
  v.number(geo, "geometry", "mirror_radius_mm", g.mirror_radius_mm, 0.0, 1e6, true);
  v.number(geo, "geometry", "cavity_length_mm", g.cavity_length_mm, 0.0, 1e6, true);
  v.number(geo, "geometry", "reflectivity_upper", g.reflectivity_upper, 0.0, 1.0, true, true);
  v.number(geo, "geometry", "reflectivity_lower", g.reflectivity_lower, 0.0, 1.0, true, true);
  v.number(geo, "geometry", "wavelength_nm", g.wavelength_nm, 0.0, 1e6, true);
  v.number(geo, "geometry", "excess_loss_per_roundtrip", g.excess_loss_per_roundtrip, 0.0, 1.0, false, true);
  v.number(geo, "geometry", "sample_tilt_deg", g.sample_tilt_deg, -90.0, 90.0);
  if (geo.is_object() && geo.contains("target_finesse")) {
    double f = 0.0;
    v.number(geo, "geometry", "target_finesse", f, 0.0, 1e9, true);
    if (geo.contains("excess_loss_per_roundtrip")) {
      v.violations.push_back("geometry: give either excess_loss_per_roundtrip or target_finesse, not both");
    } else if (f > 0.0) {
      try {
        g.excess_loss_per_roundtrip = excess_loss_for_finesse(g, f);
      } catch (const Error& e) {
        v.violations.push_back(std::string("geometry.target_finesse: ") + e.what());
      }
    }
  }
  try {
    require_stable(g);
  } catch (const Error& e) {
    v.violations.push_back(std::string("geometry: ") + e.what());
  }

  const json& basis = root.contains("basis") ? root.at("basis") : none;
  v.check_keys(basis, "basis", {"max_order", "family", "grid_pixels", "grid_pitch_um"});
  v.integer(basis, "basis", "max_order", sc.max_order, 0, 400);
  v.choice(basis, "basis", "family", sc.family, std::map<std::string, Family>{{"even", Family::even}, {"odd", Family::odd}, {"all", Family::all}});
  v.integer(basis, "basis", "grid_pixels", sc.grid_pixels, 16, 8192);
  if (basis.is_object() && basis.contains("grid_pitch_um")) {
    double p = 0.0;
    v.number(basis, "basis", "grid_pitch_um", p, 0.0, 1e4, true);
    if (p > 0.0) sc.grid_pitch_um = p;
  }

  sc.mask_path = v.file(root, "scenario", "mask_path");

  const json& pump = root.contains("pump") ? root.at("pump") : none;
  v.check_keys(pump, "pump", {"kind", "x_um", "y_um", "waist_um", "path"});
  v.choice(pump, "pump", "kind", sc.pump.kind,
           std::map<std::string, PumpKind>{{"tem00", PumpKind::tem00}, {"point", PumpKind::point},
                                           {"gaussian", PumpKind::gaussian}, {"file", PumpKind::field}});
  v.number(pump, "pump", "x_um", sc.pump.x_um, -1e6, 1e6);
  v.number(pump, "pump", "y_um", sc.pump.y_um, -1e6, 1e6);
  v.number(pump, "pump", "waist_um", sc.pump.waist_um, 0.0, 1e6, true);
  if (sc.pump.kind == PumpKind::gaussian && !(sc.pump.waist_um > 0.0)) {
    v.violations.push_back("pump.waist_um: required for a gaussian pump");
  }
  sc.pump_path = v.file(pump, "pump", "path");
  if (sc.pump.kind == PumpKind::field && !sc.pump_path) v.violations.push_back("pump.path: required for a file pump");

  const json& dev = root.contains("device") ? root.at("device") : none;
  v.check_keys(dev, "device",
               {"width_px", "height_px", "pitch_um", "graphene_convention", "graphene_absorption", "substrate_finesse",
                "hbn_finesse", "wire_width_um", "wire_gap_um"});
  v.integer(dev, "device", "width_px", sc.device.width, 8, 16384);
  v.integer(dev, "device", "height_px", sc.device.height, 8, 16384);
  v.number(dev, "device", "pitch_um", sc.device.pitch_um, 0.0, 1e4, true);
  v.choice(dev, "device", "graphene_convention", sc.device.convention,
           std::map<std::string, GrapheneConvention>{{"per_pass", GrapheneConvention::per_pass},
                                                     {"per_roundtrip", GrapheneConvention::per_roundtrip}});
  v.number(dev, "device", "graphene_absorption", sc.device.graphene_absorption, 0.0, 1.0, false, true);
  v.number(dev, "device", "substrate_finesse", sc.device.substrate_finesse, 0.0, 1e9, true);
  v.number(dev, "device", "hbn_finesse", sc.device.hbn_finesse, 0.0, 1e9, true);
  v.number(dev, "device", "wire_width_um", sc.device.wire_width_um, 0.0, 1e4, true);
  v.number(dev, "device", "wire_gap_um", sc.device.wire_gap_um, 0.0, 1e4, true);
  if (sc.device.hbn_finesse > sc.device.substrate_finesse) {
    v.violations.push_back("device: hbn_finesse cannot exceed substrate_finesse");
  }

  const json& an = root.contains("analysis") ? root.at("analysis") : none;
  v.check_keys(an, "analysis",
               {"range_start_hz", "range_stop_hz", "bins", "model", "positions", "imaging_max_order",
                "illumination_waist_um", "trace_path", "segment_length", "overlap", "window", "band_low_hz",
                "band_high_hz", "slope_v_per_hz", "bare_rms_hz", "drive_path", "peak_voltages_v", "drive_frequency_hz",
                "response_sigma_hz"});
  auto& a = sc.analysis;
  v.number(an, "analysis", "range_start_hz", a.range_start_hz, -1e15, 1e15);
  v.number(an, "analysis", "range_stop_hz", a.range_stop_hz, -1e15, 1e15);
  if (!(a.range_stop_hz > a.range_start_hz)) v.violations.push_back("analysis: range_stop_hz must exceed range_start_hz");
  v.integer(an, "analysis", "bins", a.bins, 4, 50000000);
  v.choice(an, "analysis", "model", a.model,
           std::map<std::string, SpectrumModel>{{"automatic", SpectrumModel::automatic},
                                                {"diagonal", SpectrumModel::diagonal},
                                                {"eigenmodes", SpectrumModel::eigenmodes}});
  if (an.is_object() && an.contains("positions")) {
    const json& ps = an.at("positions");
    if (!ps.is_array()) {
      v.violations.push_back("analysis.positions: expected an array");
    } else {
      for (std::size_t i = 0; i < ps.size(); ++i) {
        const std::string block = "analysis.positions[" + std::to_string(i) + "]";
        v.check_keys(ps[i], block, {"name", "x_um", "y_um"});
        NamedPoint np{"p" + std::to_string(i), {}};
        if (auto n = v.get<std::string>(ps[i], block, "name")) np.name = *n;
        if (!ps[i].is_object() || !ps[i].contains("x_um") || !ps[i].contains("y_um")) {
          v.violations.push_back(block + ": x_um and y_um are required");
        }
        v.number(ps[i], block, "x_um", np.point.x_um, -1e6, 1e6);
        v.number(ps[i], block, "y_um", np.point.y_um, -1e6, 1e6);
        a.positions.push_back(np);
      }
    }
  }
  v.integer(an, "analysis", "imaging_max_order", a.imaging_max_order, 0, 400);
  if (an.is_object() && an.contains("illumination_waist_um")) {
    double w = 0.0;
    v.number(an, "analysis", "illumination_waist_um", w, 0.0, 1e6, true);
    if (w > 0.0) a.illumination_waist_um = w;
  }
  a.trace_path = v.file(an, "analysis", "trace_path");
  int seg = static_cast<int>(a.segment_length);
  v.integer(an, "analysis", "segment_length", seg, 2, 1 << 26);
  a.segment_length = static_cast<std::size_t>(seg);
  v.number(an, "analysis", "overlap", a.overlap, 0.0, 1.0, false, true);
  v.choice(an, "analysis", "window", a.window, std::map<std::string, Window>{{"hann", Window::hann}, {"boxcar", Window::boxcar}});
  v.number(an, "analysis", "band_low_hz", a.band_low_hz, 0.0, 1e12);
  v.number(an, "analysis", "band_high_hz", a.band_high_hz, 0.0, 1e12, true);
  if (!(a.band_high_hz > a.band_low_hz)) v.violations.push_back("analysis: band_high_hz must exceed band_low_hz");
  v.number(an, "analysis", "slope_v_per_hz", a.slope_v_per_hz, 0.0, 1e6, true);
  v.number(an, "analysis", "bare_rms_hz", a.bare_rms_hz, 0.0, 1e15);
  a.drive_path = v.file(an, "analysis", "drive_path");
  if (auto pv = v.get<std::vector<double>>(an, "analysis", "peak_voltages_v")) a.peak_voltages_v = *pv;
  v.number(an, "analysis", "drive_frequency_hz", a.drive_frequency_hz, 0.0, 1e12);
  if (an.is_object() && an.contains("response_sigma_hz")) {
    double s = 0.0;
    v.number(an, "analysis", "response_sigma_hz", s, 0.0, 1e15, true);
    if (s > 0.0) a.response_sigma_hz = s;
  }

  const json& sol = root.contains("solver") ? root.at("solver") : none;
  v.check_keys(sol, "solver", {"dense_limit", "max_iterations", "tolerance"});
  int dense = static_cast<int>(sc.solver.dense_limit);
  v.integer(sol, "solver", "dense_limit", dense, 0, 100000);
  sc.solver.dense_limit = dense;
  v.integer(sol, "solver", "max_iterations", sc.solver.max_iterations, 1, 100000000);
  v.number(sol, "solver", "tolerance", sc.solver.tolerance, 0.0, 1.0, true);

  if (auto out = v.get<std::string>(root, "scenario", "output_dir")) {
    fs::path p(*out);
    sc.output_dir = p.is_relative() ? v.base() / p : p;
  } else {
    sc.output_dir = v.base() / "out";
  }

  if (!v.violations.empty()) throw ValidationError(v.violations);
  if (sc.pump_path) {
    sc.pump.field_map = load_mask(*sc.pump_path);
  }
  return sc;
}

inline Scenario parse_scenario(const fs::path& path) {
  auto in = detail::open_in(path);
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError({path.string() + ": " + e.what()});
  }
  return parse_scenario_json(root, path);
}

// Basis grid for a scenario: fixed pitch when given, else the default pixel count.
inline GridSpec scenario_grid(const Scenario& sc, const ModeBasis& basis) {
  return sc.grid_pitch_um ? grid_for_pitch(basis, *sc.grid_pitch_um) : default_grid(basis, sc.grid_pixels);
}

}  // namespace confocal::io
