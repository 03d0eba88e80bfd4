#pragma once

// Plain-text experiment configuration:
//
//   name = tikhonov-selection
//   [problem]
//   gamma = 1
//   x0 = 1, 1
//   [phi]
//   kind = quadratic
//   A = 1, 0; 0, 0
//
// Vectors are comma separated, matrix rows are separated by ';'. Nested
// objects use dotted keys (part.0.set.kind = box). Unknown keys are errors.

#include "hiermin/core.hpp"
#include "hiermin/integrator.hpp"
#include "hiermin/potentials.hpp"
#include "hiermin/schedules.hpp"
#include "hiermin/sets.hpp"

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace hiermin {

struct Tolerances {
  double e2_rel = 1e-3;
  double monotone = 1e-7;
  double speed = 1e-3;
  double grad_phi = 1e-3;
  double phi = 1e-4;
  double psi_gap = 5e-2;
  double anti_psi_margin = 0.05;
  double int_phi_tail = 1e-2;
  double h_tail = 1e-2;
  double dist_c = 1e-4;
  double dist_z = 5e-2;
  double tail_increase = 1e-9;
  double distinct = 1e-2;
  double oracle_kkt = 1e-8;
  double oracle_grid = 2e-3;
  double mean_gap = 1e-3;
  double profile = 1e-2;
  double residual = 5e-4;
  double anti_residual = 1e-2;
  double roundtrip = 1e-8;
  friend bool operator==(const Tolerances&, const Tolerances&) = default;
};

/// Grid, stiffness and data of the discretized coupled wave problem.
struct WavesSetup {
  Eigen::Index n = 64;
  double alpha1 = 4096.0;
  double alpha2 = 8192.0;
  std::string forcing1 = "sin";  // sin | cos: sin(2 pi x) or cos(2 pi x) at cell centres
  std::string forcing2 = "cos";
  double amplitude1 = 1.0;
  double amplitude2 = 1.0;
  double mean1 = 0.3;   // initial means
  double mean2 = -0.1;
  double bump = 0.2;    // +/- bump cos(pi x) added to u1 / u2
  double vmean1 = 0.05; // constant initial velocities
  double vmean2 = -0.02;
  friend bool operator==(const WavesSetup&, const WavesSetup&) = default;
};

/// Parameters of the reparametrization round trip.
struct DictionarySetup {
  double s_from = 1.0;
  double s_to = 20.0;
  double ds = 0.01;
  double probe_spacing = 1e-3;  // relative spacing of E2 probe stencils
  int probes = 60;
  double converse_to = 6.0;     // window [s_from, converse_to] integrated in beta form
  double converse_dt = 0.01;
  double perturb = 0.1;
  double roundtrip_to = 100.0;
  friend bool operator==(const DictionarySetup&, const DictionarySetup&) = default;
};

struct ExpectedConditions {
  bool h1 = true;
  bool h2 = true;
  bool h3 = true;
  friend bool operator==(const ExpectedConditions&, const ExpectedConditions&) = default;
};

struct ExperimentConfig {
  std::string name;
  /// standard | waves | dictionary | affine-rescale
  std::string mode = "standard";
  std::string description;

  std::optional<Potential> phi;
  std::optional<Potential> psi;
  double gamma = 1.0;
  double mass = 1.0;
  std::optional<EpsilonSchedule> schedule;
  Vector x0;
  Vector v0;
  double horizon = 1.0;
  StepControl step;
  std::optional<Vector> second_x0;  // optional comparison run
  std::optional<Vector> second_v0;

  Tolerances tol;
  std::vector<std::string> checks;
  ExpectedConditions expect;
  double condition_horizon = 1e8;

  std::optional<WavesSetup> waves;
  std::optional<DictionarySetup> dictionary;
  double rescale_factor = 2.0;

  std::string out_dir;
  std::uint64_t seed = 12345;
  std::size_t samples = 10000;

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    auto same_step = [](const StepControl& x, const StepControl& y) {
      return x.method == y.method && x.h0 == y.h0 && x.rtol == y.rtol && x.atol == y.atol &&
             x.max_step == y.max_step && x.output_dt == y.output_dt && x.output_times == y.output_times &&
             x.max_stored == y.max_stored && x.max_steps == y.max_steps;
    };
    return a.name == b.name && a.mode == b.mode && a.description == b.description && a.phi == b.phi &&
           a.psi == b.psi && a.gamma == b.gamma && a.mass == b.mass && a.schedule == b.schedule && a.x0 == b.x0 &&
           a.v0 == b.v0 && a.horizon == b.horizon && same_step(a.step, b.step) && a.second_x0 == b.second_x0 &&
           a.second_v0 == b.second_v0 && a.tol == b.tol && a.checks == b.checks && a.expect == b.expect &&
           a.condition_horizon == b.condition_horizon && a.waves == b.waves && a.dictionary == b.dictionary &&
           a.rescale_factor == b.rescale_factor && a.out_dir == b.out_dir && a.seed == b.seed &&
           a.samples == b.samples;
  }
};

namespace config {

// Shortest text that reads back to the same double.
inline std::string fmt(double d) {
  if (d == 0.0) d = 0.0;  // drop the sign of -0
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, r.ptr);
}

inline std::string fmt(const Vector& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s;
}

inline std::string fmt(const Matrix& m) {
  std::string s;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (r) s += "; ";
    for (Eigen::Index c = 0; c < m.cols(); ++c) s += (c ? ", " : "") + fmt(m(r, c));
  }
  return s;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

/// Parsed key/value pairs of one section, tracking which keys were used.
class Section {
 public:
  struct Entry {
    std::string value;
    int line = 0;
    bool used = false;
  };

  explicit Section(std::string name = "") : name_(std::move(name)) {}

  void set(const std::string& key, std::string value, int line) {
    if (entries_.count(key)) throw ConfigError(where(key, line) + ": duplicate key");
    entries_[key] = {std::move(value), line, false};
  }

  [[nodiscard]] bool has(const std::string& key) const { return entries_.count(key) > 0; }

  bool has_prefix(const std::string& prefix) const {
    for (const auto& [k, e] : entries_) {
      if (k.rfind(prefix, 0) == 0) return true;
    }
    return false;
  }

  const std::string& raw(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("[" + name_ + "] missing key '" + key + "'");
    it->second.used = true;
    return it->second.value;
  }

  std::string str(const std::string& key, const std::string& def) { return has(key) ? raw(key) : def; }
  std::string str(const std::string& key) { return raw(key); }

  double num(const std::string& key) {
    const std::string& v = raw(key);
    return parse_double(v, key);
  }
  double num(const std::string& key, double def) { return has(key) ? num(key) : def; }

  std::int64_t integer(const std::string& key) {
    const std::string& v = raw(key);
    std::int64_t out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw bad(key, "expected an integer, got '" + v + "'");
    return out;
  }
  std::int64_t integer(const std::string& key, std::int64_t def) { return has(key) ? integer(key) : def; }

  bool boolean(const std::string& key, bool def) {
    if (!has(key)) return def;
    const std::string& v = raw(key);
    if (v == "true") return true;
    if (v == "false") return false;
    throw bad(key, "expected true or false, got '" + v + "'");
  }

  Vector vec(const std::string& key) {
    const std::string& v = raw(key);
    if (trim(v).empty()) return Vector(0);
    const auto parts = split(v, ',');
    Vector out(Eigen::Index(parts.size()));
    for (std::size_t i = 0; i < parts.size(); ++i) out[Eigen::Index(i)] = parse_double(parts[i], key);
    return out;
  }

  Matrix mat(const std::string& key, Eigen::Index rows_if_empty = 0) {
    const std::string& v = raw(key);
    if (trim(v).empty()) return Matrix(rows_if_empty, 0);
    const auto rows = split(v, ';');
    std::vector<std::vector<double>> data;
    for (const auto& r : rows) {
      std::vector<double> row;
      for (const auto& c : split(r, ',')) row.push_back(parse_double(c, key));
      if (!data.empty() && row.size() != data.front().size()) throw bad(key, "ragged matrix rows");
      data.push_back(std::move(row));
    }
    Matrix m(Eigen::Index(data.size()), Eigen::Index(data.front().size()));
    for (std::size_t r = 0; r < data.size(); ++r) {
      for (std::size_t c = 0; c < data[r].size(); ++c) m(Eigen::Index(r), Eigen::Index(c)) = data[r][c];
    }
    return m;
  }

  std::vector<std::string> list(const std::string& key) {
    std::vector<std::string> out;
    const std::string& v = raw(key);
    if (trim(v).empty()) return out;
    for (auto& s : split(v, ',')) out.push_back(s);
    return out;
  }

  void check_all_used() const {
    for (const auto& [k, e] : entries_) {
      if (!e.used) throw ConfigError(where(k, e.line) + ": unknown key");
    }
  }

  ConfigError bad(const std::string& key, const std::string& msg) const {
    auto it = entries_.find(key);
    return ConfigError(where(key, it == entries_.end() ? 0 : it->second.line) + ": " + msg);
  }

  [[nodiscard]] const std::string& name() const { return name_; }

 private:
  double parse_double(const std::string& s, const std::string& key) const {
    const std::string t = trim(s);
    double out = 0.0;
    const auto r = std::from_chars(t.data(), t.data() + t.size(), out);
    if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) {
      throw bad(key, "expected a number, got '" + t + "'");
    }
    return out;
  }

  std::string where(const std::string& key, int line) const {
    return "config key [" + name_ + "] " + key + (line ? " (line " + std::to_string(line) + ")" : "");
  }

  std::string name_;
  std::map<std::string, Entry> entries_;
};

// Wraps domain errors raised by constructors so they name the offending key.
template <class F>
auto guarded(const std::string& section, const std::string& prefix, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("config key [" + section + "] " + prefix + "kind: " + e.what());
  }
}

inline ArgminSet parse_set(Section& s, const std::string& p) {
  const std::string kind = s.str(p + "kind");
  if (kind == "affine") {
    const Vector point = s.vec(p + "point");
    const Matrix basis = s.mat(p + "basis", point.size());
    return guarded(s.name(), p, [&] { return ArgminSet::affine(point, basis); });
  }
  if (kind == "point") return guarded(s.name(), p, [&] { return ArgminSet::point(s.vec(p + "point")); });
  if (kind == "box") {
    const Vector lo = s.vec(p + "lo"), hi = s.vec(p + "hi");
    return guarded(s.name(), p, [&] { return ArgminSet::box(lo, hi); });
  }
  if (kind == "ball") {
    const Vector c = s.vec(p + "center");
    const double r = s.num(p + "radius");
    return guarded(s.name(), p, [&] { return ArgminSet::ball(c, r); });
  }
  if (kind == "product") {
    const auto count = s.integer(p + "parts");
    std::vector<ArgminSet> parts;
    for (std::int64_t i = 0; i < count; ++i) parts.push_back(parse_set(s, p + "part." + std::to_string(i) + "."));
    return guarded(s.name(), p, [&] { return ArgminSet::product_of(parts); });
  }
  throw s.bad(p + "kind", "unknown set kind '" + kind + "' (affine, point, box, ball, product)");
}

inline void write_set(std::ostream& os, const ArgminSet& set, const std::string& p) {
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, ArgminSet::Affine>) {
          os << p << "kind = affine\n" << p << "point = " << fmt(k.point) << '\n';
          os << p << "basis = " << fmt(k.basis) << '\n';
        } else if constexpr (std::is_same_v<K, ArgminSet::Box>) {
          os << p << "kind = box\n" << p << "lo = " << fmt(k.lo) << '\n' << p << "hi = " << fmt(k.hi) << '\n';
        } else if constexpr (std::is_same_v<K, ArgminSet::Ball>) {
          os << p << "kind = ball\n" << p << "center = " << fmt(k.center) << '\n';
          os << p << "radius = " << fmt(k.radius) << '\n';
        } else if constexpr (std::is_same_v<K, ArgminSet::Product>) {
          os << p << "kind = product\n" << p << "parts = " << k.parts.size() << '\n';
          for (std::size_t i = 0; i < k.parts.size(); ++i) {
            write_set(os, *k.parts[i].set, p + "part." + std::to_string(i) + ".");
          }
        }
      },
      set.kind());
}

inline Block parse_block(Section& s, const std::string& key) {
  const Vector v = s.vec(key);
  if (v.size() != 2) throw s.bad(key, "expected 'offset, size'");
  return Block{Eigen::Index(v[0]), Eigen::Index(v[1])};
}

inline Potential parse_potential(Section& s, const std::string& p) {
  const std::string kind = s.str(p + "kind");
  if (kind == "quadratic") {
    const Matrix A = s.mat(p + "A");
    const Vector b = s.vec(p + "b");
    const double c = s.num(p + "c", 0.0);
    return guarded(s.name(), p, [&] { return Potential::quadratic(A, b, c); });
  }
  if (kind == "zero") {
    const auto n = s.integer(p + "dim");
    return guarded(s.name(), p, [&] { return Potential::zero(Eigen::Index(n)); });
  }
  if (kind == "sq-dist") {
    const double w = s.num(p + "weight", 0.5);
    ArgminSet set = parse_set(s, p + "set.");
    return guarded(s.name(), p, [&] { return Potential::sq_dist(set, w); });
  }
  if (kind == "tikhonov") {
    const Vector c = s.vec(p + "center");
    const double w = s.num(p + "weight", 0.5);
    return guarded(s.name(), p, [&] { return Potential::tikhonov(c, w); });
  }
  if (kind == "separable") {
    const auto count = s.integer(p + "parts");
    std::vector<Potential> parts;
    for (std::int64_t i = 0; i < count; ++i) {
      parts.push_back(parse_potential(s, p + "part." + std::to_string(i) + "."));
    }
    return guarded(s.name(), p, [&] { return Potential::separable_of(parts); });
  }
  if (kind == "coupling") {
    const Matrix L1 = s.mat(p + "L1"), L2 = s.mat(p + "L2");
    const Block b1 = parse_block(s, p + "block1"), b2 = parse_block(s, p + "block2");
    const auto n = s.integer(p + "dim");
    return guarded(s.name(), p, [&] { return Potential::coupling(L1, L2, b1, b2, Eigen::Index(n)); });
  }
  throw s.bad(p + "kind", "unknown potential kind '" + kind +
                              "' (quadratic, zero, sq-dist, tikhonov, separable, coupling)");
}

inline void write_potential(std::ostream& os, const Potential& pot, const std::string& p) {
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Potential::QuadraticForm>) {
          os << p << "kind = quadratic\n" << p << "A = " << fmt(k.A) << '\n';
          os << p << "b = " << fmt(k.b) << '\n' << p << "c = " << fmt(k.c) << '\n';
        } else if constexpr (std::is_same_v<K, Potential::SqDistToSet>) {
          os << p << "kind = sq-dist\n" << p << "weight = " << fmt(k.weight) << '\n';
          write_set(os, k.set, p + "set.");
        } else if constexpr (std::is_same_v<K, Potential::Tikhonov>) {
          os << p << "kind = tikhonov\n" << p << "center = " << fmt(k.center) << '\n';
          os << p << "weight = " << fmt(k.weight) << '\n';
        } else if constexpr (std::is_same_v<K, Potential::SeparableSum>) {
          os << p << "kind = separable\n" << p << "parts = " << k.parts.size() << '\n';
          for (std::size_t i = 0; i < k.parts.size(); ++i) {
            write_potential(os, *k.parts[i].potential, p + "part." + std::to_string(i) + ".");
          }
        } else if constexpr (std::is_same_v<K, Potential::QuadraticCoupling>) {
          os << p << "kind = coupling\n" << p << "L1 = " << fmt(k.L1) << '\n' << p << "L2 = " << fmt(k.L2) << '\n';
          os << p << "block1 = " << k.block1.offset << ", " << k.block1.size << '\n';
          os << p << "block2 = " << k.block2.offset << ", " << k.block2.size << '\n';
          os << p << "dim = " << k.dim << '\n';
        }
      },
      pot.kind());
}

inline EpsilonSchedule parse_schedule(Section& s, const std::string& p) {
  const std::string kind = s.str(p + "kind");
  if (kind == "power-law") {
    const double a = s.num(p + "alpha"), sc = s.num(p + "scale", 1.0);
    return guarded(s.name(), p, [&] { return EpsilonSchedule::power_law(a, sc); });
  }
  if (kind == "exponential") {
    const double r = s.num(p + "rate");
    return guarded(s.name(), p, [&] { return EpsilonSchedule::exponential(r); });
  }
  if (kind == "constant") {
    const double c = s.num(p + "c");
    return guarded(s.name(), p, [&] { return EpsilonSchedule::constant(c); });
  }
  if (kind == "custom") {
    const Vector t = s.vec(p + "t"), e = s.vec(p + "eps");
    return guarded(s.name(), p, [&] {
      return EpsilonSchedule::custom(std::vector<double>(t.data(), t.data() + t.size()),
                                     std::vector<double>(e.data(), e.data() + e.size()));
    });
  }
  if (kind == "rescaled") {
    const double a = s.num(p + "a");
    const EpsilonSchedule base = parse_schedule(s, p + "base.");
    return guarded(s.name(), p, [&] { return EpsilonSchedule::rescaled(base, a); });
  }
  throw s.bad(p + "kind", "unknown schedule kind '" + kind + "' (power-law, exponential, constant, custom, rescaled)");
}

inline void write_schedule(std::ostream& os, const EpsilonSchedule& sch, const std::string& p) {
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, EpsilonSchedule::PowerLaw>) {
          os << p << "kind = power-law\n" << p << "alpha = " << fmt(k.alpha) << '\n';
          os << p << "scale = " << fmt(k.scale) << '\n';
        } else if constexpr (std::is_same_v<K, EpsilonSchedule::Exponential>) {
          os << p << "kind = exponential\n" << p << "rate = " << fmt(k.rate) << '\n';
        } else if constexpr (std::is_same_v<K, EpsilonSchedule::Constant>) {
          os << p << "kind = constant\n" << p << "c = " << fmt(k.c) << '\n';
        } else if constexpr (std::is_same_v<K, EpsilonSchedule::Custom>) {
          os << p << "kind = custom\n";
          os << p << "t = " << fmt(Vector(Eigen::Map<const Vector>(k.t.data(), Eigen::Index(k.t.size())))) << '\n';
          os << p << "eps = " << fmt(Vector(Eigen::Map<const Vector>(k.eps.data(), Eigen::Index(k.eps.size())))) << '\n';
        } else if constexpr (std::is_same_v<K, EpsilonSchedule::Rescaled>) {
          os << p << "kind = rescaled\n" << p << "a = " << fmt(k.a) << '\n';
          write_schedule(os, *k.base, p + "base.");
        }
      },
      sch.kind());
}

// Field table for the flat numeric blocks, shared by parse and serialize.
template <class F>
void tolerance_fields(Tolerances& t, F&& f) {
  f("e2_rel", t.e2_rel);
  f("monotone", t.monotone);
  f("speed", t.speed);
  f("grad_phi", t.grad_phi);
  f("phi", t.phi);
  f("psi_gap", t.psi_gap);
  f("anti_psi_margin", t.anti_psi_margin);
  f("int_phi_tail", t.int_phi_tail);
  f("h_tail", t.h_tail);
  f("dist_c", t.dist_c);
  f("dist_z", t.dist_z);
  f("tail_increase", t.tail_increase);
  f("distinct", t.distinct);
  f("oracle_kkt", t.oracle_kkt);
  f("oracle_grid", t.oracle_grid);
  f("mean_gap", t.mean_gap);
  f("profile", t.profile);
  f("residual", t.residual);
  f("anti_residual", t.anti_residual);
  f("roundtrip", t.roundtrip);
}

template <class F>
void waves_fields(WavesSetup& w, F&& f) {
  f("alpha1", w.alpha1);
  f("alpha2", w.alpha2);
  f("amplitude1", w.amplitude1);
  f("amplitude2", w.amplitude2);
  f("mean1", w.mean1);
  f("mean2", w.mean2);
  f("bump", w.bump);
  f("vmean1", w.vmean1);
  f("vmean2", w.vmean2);
}

template <class F>
void dictionary_fields(DictionarySetup& d, F&& f) {
  f("s_from", d.s_from);
  f("s_to", d.s_to);
  f("ds", d.ds);
  f("probe_spacing", d.probe_spacing);
  f("converse_to", d.converse_to);
  f("converse_dt", d.converse_dt);
  f("perturb", d.perturb);
  f("roundtrip_to", d.roundtrip_to);
}

}  // namespace config

/// Parses configuration text. Errors name the offending section and key.
inline ExperimentConfig parse_config(const std::string& text) {
  using config::Section;
  std::map<std::string, Section> sections;
  sections.emplace("", Section("top"));
  std::string current;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  static const std::vector<std::string> known = {"",          "problem",  "phi",    "psi",   "schedule",
                                                 "integrator", "tolerances", "checks", "waves", "dictionary",
                                                 "rescale",   "output",   "compare"};
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = config::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": malformed section header");
      current = config::trim(line.substr(1, line.size() - 2));
      if (std::find(known.begin(), known.end(), current) == known.end()) {
        throw ConfigError("config line " + std::to_string(lineno) + ": unknown section [" + current + "]");
      }
      sections.try_emplace(current, Section(current));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    sections.at(current).set(config::trim(line.substr(0, eq)), config::trim(line.substr(eq + 1)), lineno);
  }
  auto sec = [&](const std::string& n) -> Section& { return sections.try_emplace(n, Section(n)).first->second; };
  auto present = [&](const std::string& n) { return sections.count(n) > 0; };

  ExperimentConfig c;
  Section& top = sec("");
  c.name = top.str("name");
  c.mode = top.str("mode", "standard");
  c.description = top.str("description", "");
  if (c.mode != "standard" && c.mode != "waves" && c.mode != "dictionary" && c.mode != "affine-rescale") {
    throw top.bad("mode", "unknown mode '" + c.mode + "' (standard, waves, dictionary, affine-rescale)");
  }

  Section& pr = sec("problem");
  c.gamma = pr.num("gamma", 1.0);
  c.mass = pr.num("mass", 1.0);
  c.horizon = pr.num("horizon");
  if (pr.has("x0")) c.x0 = pr.vec("x0");
  if (pr.has("v0")) c.v0 = pr.vec("v0");
  if (present("compare")) {
    Section& cmp = sec("compare");
    c.second_x0 = cmp.vec("x0");
    c.second_v0 = cmp.vec("v0");
  }
  if (present("phi")) c.phi = config::parse_potential(sec("phi"), "");
  if (present("psi")) c.psi = config::parse_potential(sec("psi"), "");
  c.schedule = config::parse_schedule(sec("schedule"), "");

  Section& in = sec("integrator");
  const std::string method = in.str("method", "rk45");
  if (method == "rk45") {
    c.step.method = Method::RK45;
  } else if (method == "rk4") {
    c.step.method = Method::RK4;
  } else {
    throw in.bad("method", "unknown method '" + method + "' (rk4, rk45)");
  }
  c.step.h0 = in.num("h0", c.step.h0);
  c.step.rtol = in.num("rtol", c.step.rtol);
  c.step.atol = in.num("atol", c.step.atol);
  c.step.max_step = in.num("max_step", c.step.max_step);
  c.step.output_dt = in.num("output_dt", c.step.output_dt);
  c.step.max_stored = std::size_t(in.integer("max_stored", std::int64_t(c.step.max_stored)));
  c.step.max_steps = std::size_t(in.integer("max_steps", std::int64_t(c.step.max_steps)));

  Section& tol = sec("tolerances");
  config::tolerance_fields(c.tol, [&](const char* k, double& v) { v = tol.num(k, v); });

  Section& ch = sec("checks");
  if (ch.has("enabled")) c.checks = ch.list("enabled");
  c.expect.h1 = ch.boolean("expect_h1", true);
  c.expect.h2 = ch.boolean("expect_h2", true);
  c.expect.h3 = ch.boolean("expect_h3", true);
  c.condition_horizon = ch.num("condition_horizon", c.condition_horizon);
  c.samples = std::size_t(ch.integer("samples", std::int64_t(c.samples)));

  if (present("waves")) {
    Section& w = sec("waves");
    WavesSetup ws;
    ws.n = Eigen::Index(w.integer("n", ws.n));
    ws.forcing1 = w.str("forcing1", ws.forcing1);
    ws.forcing2 = w.str("forcing2", ws.forcing2);
    config::waves_fields(ws, [&](const char* k, double& v) { v = w.num(k, v); });
    c.waves = ws;
  }
  if (present("dictionary")) {
    Section& d = sec("dictionary");
    DictionarySetup ds;
    ds.probes = int(d.integer("probes", ds.probes));
    config::dictionary_fields(ds, [&](const char* k, double& v) { v = d.num(k, v); });
    c.dictionary = ds;
  }
  if (present("rescale")) c.rescale_factor = sec("rescale").num("a", c.rescale_factor);

  Section& out = sec("output");
  c.out_dir = out.str("dir", "");
  c.seed = std::uint64_t(out.integer("seed", std::int64_t(c.seed)));

  for (const auto& [name, s] : sections) s.check_all_used();

  if (c.mode == "waves" && !c.waves) throw ConfigError("config: mode 'waves' needs a [waves] section");
  if (c.mode == "dictionary" && !c.dictionary) throw ConfigError("config: mode 'dictionary' needs a [dictionary] section");
  if (c.mode != "waves") {
    if (!c.phi || !c.psi) throw ConfigError("config: [phi] and [psi] sections are required");
    if (c.x0.size() != c.phi->dim()) throw ConfigError("config key [problem] x0: dimension does not match [phi]");
    if (c.v0.size() == 0) c.v0 = Vector::Zero(c.x0.size());
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

inline std::string serialize_config(const ExperimentConfig& c) {
  using config::fmt;
  std::ostringstream os;
  os << "name = " << c.name << '\n' << "mode = " << c.mode << '\n';
  if (!c.description.empty()) os << "description = " << c.description << '\n';
  os << "\n[problem]\n";
  os << "gamma = " << fmt(c.gamma) << "\nmass = " << fmt(c.mass) << "\nhorizon = " << fmt(c.horizon) << '\n';
  if (c.x0.size()) os << "x0 = " << fmt(c.x0) << '\n';
  if (c.v0.size()) os << "v0 = " << fmt(c.v0) << '\n';
  if (c.second_x0 && c.second_v0) {
    os << "\n[compare]\nx0 = " << fmt(*c.second_x0) << "\nv0 = " << fmt(*c.second_v0) << '\n';
  }
  if (c.phi) {
    os << "\n[phi]\n";
    config::write_potential(os, *c.phi, "");
  }
  if (c.psi) {
    os << "\n[psi]\n";
    config::write_potential(os, *c.psi, "");
  }
  if (c.schedule) {
    os << "\n[schedule]\n";
    config::write_schedule(os, *c.schedule, "");
  }
  os << "\n[integrator]\nmethod = " << (c.step.method == Method::RK4 ? "rk4" : "rk45") << '\n';
  os << "h0 = " << fmt(c.step.h0) << "\nrtol = " << fmt(c.step.rtol) << "\natol = " << fmt(c.step.atol) << '\n';
  os << "max_step = " << fmt(c.step.max_step) << "\noutput_dt = " << fmt(c.step.output_dt) << '\n';
  os << "max_stored = " << c.step.max_stored << "\nmax_steps = " << c.step.max_steps << '\n';
  os << "\n[tolerances]\n";
  Tolerances t = c.tol;
  config::tolerance_fields(t, [&](const char* k, double& v) { os << k << " = " << fmt(v) << '\n'; });
  os << "\n[checks]\nenabled = ";
  for (std::size_t i = 0; i < c.checks.size(); ++i) os << (i ? ", " : "") << c.checks[i];
  os << "\nexpect_h1 = " << (c.expect.h1 ? "true" : "false") << "\nexpect_h2 = " << (c.expect.h2 ? "true" : "false")
     << "\nexpect_h3 = " << (c.expect.h3 ? "true" : "false") << '\n';
  os << "condition_horizon = " << fmt(c.condition_horizon) << "\nsamples = " << c.samples << '\n';
  if (c.waves) {
    WavesSetup w = *c.waves;
    os << "\n[waves]\nn = " << w.n << "\nforcing1 = " << w.forcing1 << "\nforcing2 = " << w.forcing2 << '\n';
    config::waves_fields(w, [&](const char* k, double& v) { os << k << " = " << fmt(v) << '\n'; });
  }
  if (c.dictionary) {
    DictionarySetup d = *c.dictionary;
    os << "\n[dictionary]\nprobes = " << d.probes << '\n';
    config::dictionary_fields(d, [&](const char* k, double& v) { os << k << " = " << fmt(v) << '\n'; });
  }
  os << "\n[rescale]\na = " << fmt(c.rescale_factor) << '\n';
  os << "\n[output]\n";
  if (!c.out_dir.empty()) os << "dir = " << c.out_dir << '\n';
  os << "seed = " << c.seed << '\n';
  return os.str();
}

}  // namespace hiermin
