#pragma once

/*!
  \file cell_library.hpp
  \brief Synthetic standard-cell library with a linear delay/slew model.

  Each cell is characterized by seven positive coefficients:

    arc delay  = d_intrinsic + r_drive * load + k_slew * slew_in
    output slew = s_intrinsic + r_slew * load

  Drive strengths X2/X4 divide the load-dependent resistances by 2/4 and
  grow area and input capacitance, so upsizing trades area (and upstream
  load) for speed.
*/

#include <array>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

#include "graphsym/detail/text.hpp"
#include "graphsym/error.hpp"

namespace graphsym {

enum class CellFunction : std::uint8_t { INV, BUF, AND2, OR2, NAND2, NOR2, XOR2, XNOR2 };
enum class Drive : std::uint8_t { X1, X2, X4 };

inline constexpr std::size_t kNumFunctions = 8;
inline constexpr std::size_t kNumDrives = 3;
inline constexpr std::size_t kNumCellKinds = kNumFunctions * kNumDrives;

struct CellKind {
  CellFunction function = CellFunction::INV;
  Drive drive = Drive::X1;

  friend bool operator==(const CellKind&, const CellKind&) = default;

  /// Dense index in [0, kNumCellKinds), function-major.
  constexpr std::size_t index() const {
    return static_cast<std::size_t>(function) * kNumDrives + static_cast<std::size_t>(drive);
  }
  static constexpr CellKind from_index(std::size_t i) {
    return {static_cast<CellFunction>(i / kNumDrives), static_cast<Drive>(i % kNumDrives)};
  }
};

constexpr int num_inputs(CellFunction f) {
  return (f == CellFunction::INV || f == CellFunction::BUF) ? 1 : 2;
}

inline constexpr std::array<std::string_view, kNumFunctions> kFunctionNames = {
    "INV", "BUF", "AND2", "OR2", "NAND2", "NOR2", "XOR2", "XNOR2"};
inline constexpr std::array<std::string_view, kNumDrives> kDriveNames = {"X1", "X2", "X4"};

inline std::string to_string(CellKind k) {
  std::string s(kFunctionNames[static_cast<std::size_t>(k.function)]);
  s += '_';
  s += kDriveNames[static_cast<std::size_t>(k.drive)];
  return s;
}

inline CellFunction parse_function(std::string_view s) {
  for (std::size_t i = 0; i < kNumFunctions; ++i)
    if (kFunctionNames[i] == s) return static_cast<CellFunction>(i);
  fail(ErrorKind::Library, "unknown cell function '" + std::string(s) + "'");
}

inline Drive parse_drive(std::string_view s) {
  for (std::size_t i = 0; i < kNumDrives; ++i)
    if (kDriveNames[i] == s) return static_cast<Drive>(i);
  fail(ErrorKind::Library, "unknown drive strength '" + std::string(s) + "'");
}

/// Parses "AND2_X4".
inline CellKind parse_cell_kind(std::string_view s) {
  auto us = s.rfind('_');
  if (us == std::string_view::npos) fail(ErrorKind::Library, "bad cell kind '" + std::string(s) + "'");
  return {parse_function(s.substr(0, us)), parse_drive(s.substr(us + 1))};
}

struct CellSpec {
  CellKind kind;
  double area = 0.0;
  double input_cap = 0.0;
  double d_intrinsic = 0.0;
  double r_drive = 0.0;
  double k_slew = 0.0;
  double s_intrinsic = 0.0;
  double r_slew = 0.0;

  friend bool operator==(const CellSpec&, const CellSpec&) = default;
};

inline double arc_delay(const CellSpec& spec, double slew_in, double load) {
  if (!(slew_in >= 0.0) || !(load >= 0.0))
    fail(ErrorKind::Domain, "arc_delay requires slew_in >= 0 and load >= 0");
  return spec.d_intrinsic + spec.r_drive * load + spec.k_slew * slew_in;
}

inline double arc_slew(const CellSpec& spec, double load) {
  if (!(load >= 0.0)) fail(ErrorKind::Domain, "arc_slew requires load >= 0");
  return spec.s_intrinsic + spec.r_slew * load;
}

inline constexpr int kLibrarySchemaVersion = 1;

class CellLibrary {
public:
  CellLibrary() = default;

  const CellSpec& spec(CellKind k) const {
    const auto& s = cells_[k.index()];
    if (!present_[k.index()]) fail(ErrorKind::Library, "cell " + to_string(k) + " not in library");
    return s;
  }
  bool contains(CellKind k) const { return present_[k.index()]; }

  void set_spec(const CellSpec& s) {
    cells_[s.kind.index()] = s;
    present_[s.kind.index()] = true;
  }

  double wire_cap_per_fanout = 0.0;
  double default_input_slew = 0.0;
  double default_output_load = 0.0;
  std::string version;

  /// Hash of the serialized form; stages compare these to detect mixed libraries.
  std::string fingerprint() const;

  friend bool operator==(const CellLibrary&, const CellLibrary&) = default;

private:
  std::array<CellSpec, kNumCellKinds> cells_{};
  std::array<bool, kNumCellKinds> present_{};
};

/// Checks every structural invariant; throws a library error naming the first violation.
inline void validate(const CellLibrary& lib) {
  auto bad = [](const std::string& m) { fail(ErrorKind::Library, m); };
  if (!(lib.wire_cap_per_fanout >= 0.0) || !(lib.default_input_slew >= 0.0) || !(lib.default_output_load > 0.0))
    bad("global constants out of range");
  for (std::size_t f = 0; f < kNumFunctions; ++f) {
    for (std::size_t d = 0; d < kNumDrives; ++d) {
      CellKind k{static_cast<CellFunction>(f), static_cast<Drive>(d)};
      if (!lib.contains(k)) bad("missing cell " + to_string(k));
      const auto& s = lib.spec(k);
      for (double c : {s.area, s.input_cap, s.d_intrinsic, s.r_drive, s.k_slew, s.s_intrinsic, s.r_slew})
        if (!(c > 0.0)) bad("non-positive coefficient in " + to_string(k));
      if (d > 0) {
        const auto& prev = lib.spec({k.function, static_cast<Drive>(d - 1)});
        if (!(s.r_drive < prev.r_drive) || !(s.area > prev.area) || !(s.input_cap >= prev.input_cap))
          bad("drive ordering violated at " + to_string(k));
        // Upsizing must be strictly faster at any load >= default_output_load.
        double load = lib.default_output_load;
        if (!(arc_delay(s, 0.0, load) < arc_delay(prev, 0.0, load)) || s.k_slew > prev.k_slew ||
            s.d_intrinsic > prev.d_intrinsic)
          bad("upsizing does not reduce delay at " + to_string(k));
      }
    }
  }
}

namespace detail {

struct BaseCoefficients {
  CellFunction function;
  double area, input_cap, d_intrinsic, r_drive, k_slew, s_intrinsic, r_slew;
};

// Schema v1 coefficients at drive X1. Units: area um^2, capacitance fF, time ns.
inline constexpr std::array<BaseCoefficients, kNumFunctions> kBaseCells = {{
    {CellFunction::INV, 0.53, 1.6, 0.010, 0.020, 0.15, 0.008, 0.018},
    {CellFunction::BUF, 0.80, 1.0, 0.030, 0.018, 0.12, 0.010, 0.016},
    {CellFunction::AND2, 1.06, 1.0, 0.040, 0.024, 0.18, 0.012, 0.022},
    {CellFunction::OR2, 1.06, 1.0, 0.045, 0.026, 0.18, 0.012, 0.024},
    {CellFunction::NAND2, 0.80, 1.6, 0.015, 0.022, 0.16, 0.010, 0.020},
    {CellFunction::NOR2, 0.80, 1.7, 0.020, 0.028, 0.17, 0.012, 0.026},
    {CellFunction::XOR2, 1.60, 2.2, 0.055, 0.030, 0.20, 0.014, 0.028},
    {CellFunction::XNOR2, 1.60, 2.2, 0.055, 0.030, 0.20, 0.014, 0.028},
}};

inline constexpr std::array<double, kNumDrives> kDriveStrength = {1.0, 2.0, 4.0};
inline constexpr std::array<double, kNumDrives> kAreaScale = {1.0, 1.5, 2.5};
inline constexpr std::array<double, kNumDrives> kCapScale = {1.0, 1.5, 2.2};

}  // namespace detail

/*! \brief Builds the seed-reproducible library.

  Seed 0 is the canonical library (the coefficients shipped in
  data/cell_library_v1.txt). Other seeds scale each function's X1
  coefficients by independent factors in [0.85, 1.15]; drive scaling is
  structural, so all invariants hold for every seed.
*/
inline CellLibrary default_library(std::uint64_t seed = 0) {
  CellLibrary lib;
  lib.wire_cap_per_fanout = 0.4;
  lib.default_input_slew = 0.02;
  lib.default_output_load = 2.0;
  lib.version = "graphsym-cells-v1/seed-" + std::to_string(seed);

  std::mt19937_64 rng(seed);
  auto jitter = [&]() {
    if (seed == 0) return 1.0;
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return 0.85 + 0.3 * u;
  };
  for (const auto& b : detail::kBaseCells) {
    double fa = jitter(), fc = jitter(), fd = jitter(), fr = jitter(), fk = jitter(), fs = jitter(), frs = jitter();
    for (std::size_t d = 0; d < kNumDrives; ++d) {
      CellSpec s;
      s.kind = {b.function, static_cast<Drive>(d)};
      s.area = b.area * fa * detail::kAreaScale[d];
      s.input_cap = b.input_cap * fc * detail::kCapScale[d];
      s.d_intrinsic = b.d_intrinsic * fd;
      s.r_drive = b.r_drive * fr / detail::kDriveStrength[d];
      s.k_slew = b.k_slew * fk;
      s.s_intrinsic = b.s_intrinsic * fs;
      s.r_slew = b.r_slew * frs / detail::kDriveStrength[d];
      lib.set_spec(s);
    }
  }
  return lib;
}

/// Key/value text form. Doubles are written in shortest round-trip form.
inline std::string serialize(const CellLibrary& lib) {
  using detail::format_double;
  std::ostringstream os;
  os << "# graphsym cell library\n";
  os << "schema_version " << kLibrarySchemaVersion << "\n";
  os << "version " << lib.version << "\n";
  os << "wire_cap_per_fanout " << format_double(lib.wire_cap_per_fanout) << "\n";
  os << "default_input_slew " << format_double(lib.default_input_slew) << "\n";
  os << "default_output_load " << format_double(lib.default_output_load) << "\n";
  for (std::size_t i = 0; i < kNumCellKinds; ++i) {
    CellKind k = CellKind::from_index(i);
    if (!lib.contains(k)) continue;
    const auto& s = lib.spec(k);
    os << "cell " << kFunctionNames[static_cast<std::size_t>(k.function)] << ' '
       << kDriveNames[static_cast<std::size_t>(k.drive)] << " area=" << format_double(s.area)
       << " input_cap=" << format_double(s.input_cap) << " d_intrinsic=" << format_double(s.d_intrinsic)
       << " r_drive=" << format_double(s.r_drive) << " k_slew=" << format_double(s.k_slew)
       << " s_intrinsic=" << format_double(s.s_intrinsic) << " r_slew=" << format_double(s.r_slew) << "\n";
  }
  return os.str();
}

inline std::string CellLibrary::fingerprint() const { return detail::hex64(detail::fnv1a(serialize(*this))); }

inline CellLibrary parse_library(std::string_view text) {
  CellLibrary lib;
  bool have_schema = false;
  int line_no = 0;
  auto num = [&](std::string_view v) {
    auto d = detail::parse_double(v);
    if (!d) fail(ErrorKind::Library, "line " + std::to_string(line_no) + ": bad number '" + std::string(v) + "'");
    return *d;
  };
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    auto tok = detail::split_ws(line);
    if (tok.empty() || tok[0].starts_with('#')) continue;
    if (tok[0] == "schema_version") {
      if (tok.size() != 2 || tok[1] != std::to_string(kLibrarySchemaVersion))
        fail(ErrorKind::Library, "unsupported library schema version");
      have_schema = true;
    } else if (!have_schema) {
      fail(ErrorKind::Library, "schema_version must precede all other records");
    } else if (tok[0] == "version" && tok.size() == 2) {
      lib.version = std::string(tok[1]);
    } else if (tok[0] == "wire_cap_per_fanout" && tok.size() == 2) {
      lib.wire_cap_per_fanout = num(tok[1]);
    } else if (tok[0] == "default_input_slew" && tok.size() == 2) {
      lib.default_input_slew = num(tok[1]);
    } else if (tok[0] == "default_output_load" && tok.size() == 2) {
      lib.default_output_load = num(tok[1]);
    } else if (tok[0] == "cell" && tok.size() == 10) {
      CellSpec s;
      s.kind = {parse_function(tok[1]), parse_drive(tok[2])};
      if (lib.contains(s.kind)) fail(ErrorKind::Library, "duplicate cell " + to_string(s.kind));
      for (std::size_t i = 3; i < tok.size(); ++i) {
        auto eq = tok[i].find('=');
        if (eq == std::string_view::npos) fail(ErrorKind::Library, "line " + std::to_string(line_no) + ": expected key=value");
        auto key = tok[i].substr(0, eq);
        double v = num(tok[i].substr(eq + 1));
        if (key == "area") s.area = v;
        else if (key == "input_cap") s.input_cap = v;
        else if (key == "d_intrinsic") s.d_intrinsic = v;
        else if (key == "r_drive") s.r_drive = v;
        else if (key == "k_slew") s.k_slew = v;
        else if (key == "s_intrinsic") s.s_intrinsic = v;
        else if (key == "r_slew") s.r_slew = v;
        else fail(ErrorKind::Library, "unknown cell key '" + std::string(key) + "'");
      }
      lib.set_spec(s);
    } else {
      fail(ErrorKind::Library, "line " + std::to_string(line_no) + ": unrecognized record");
    }
  }
  if (!have_schema) fail(ErrorKind::Library, "missing schema_version");
  validate(lib);
  return lib;
}

inline CellLibrary load_library(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Format, "cannot open library file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_library(ss.str());
}

inline void save_library(const CellLibrary& lib, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Format, "cannot write library file '" + path + "'");
  out << serialize(lib);
}

}  // namespace graphsym
