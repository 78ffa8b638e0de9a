#include "abrw/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "abrw/errors.hpp"
#include "abrw/series.hpp"

namespace abrw {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::int64_t parse_int(const std::string& text) {
  std::size_t used = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(text, &used);
  } catch (const std::exception&) {
    throw ConfigError("not an integer: '" + text + "'");
  }
  if (used != text.size())
    throw ConfigError("trailing characters in integer: '" + text + "'");
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "yes" || text == "1") return true;
  if (text == "false" || text == "no" || text == "0") return false;
  throw ConfigError("not a boolean: '" + text + "'");
}

}  // namespace

double parse_number(const std::string& raw) {
  const std::string text = trim(raw);
  const auto slash = text.find('/');
  if (slash != std::string::npos) {
    const std::string num = trim(text.substr(0, slash));
    const std::string den = trim(text.substr(slash + 1));
    const double d = parse_number(den);
    if (d == 0.0) throw ConfigError("zero denominator in '" + text + "'");
    return parse_number(num) / d;
  }
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ConfigError("not a number: '" + text + "'");
  }
  if (used != text.size())
    throw ConfigError("trailing characters in number: '" + text + "'");
  if (!std::isfinite(v)) throw ConfigError("non-finite number: '" + text + "'");
  return v;
}

Config parse_config(std::istream& in) {
  Config cfg;
  std::string line, section;
  std::set<std::string> seen;
  int lineno = 0;
  bool extent_set = false;

  const std::set<std::string> sections{"domain", "lattice", "dynamics",
                                       "observables", "output"};

  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) +
                          ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!sections.count(section))
        throw ConfigError("line " + std::to_string(lineno) +
                          ": unknown section [" + section + "]");
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError("line " + std::to_string(lineno) +
                        ": key outside any section");
    const std::string qual = section + "." + key;
    if (!seen.insert(qual).second)
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key " +
                        qual);

    if (qual == "domain.shape") {
      if (val != "rectangle" && val != "disc")
        throw ConfigError("domain.shape must be rectangle or disc");
      cfg.shape = val;
    } else if (qual == "domain.dim") {
      cfg.dim = static_cast<int>(parse_int(val));
      if (cfg.dim != 2 && cfg.dim != 3)
        throw ConfigError("domain.dim must be 2 or 3");
    } else if (qual == "domain.extent") {
      const auto toks = split_ws(val);
      if (toks.size() < 2 || toks.size() > 3)
        throw ConfigError("domain.extent needs 2 or 3 side lengths");
      for (std::size_t i = 0; i < toks.size(); ++i)
        cfg.extent[static_cast<int>(i)] = parse_number(toks[i]);
      extent_set = true;
      if (toks.size() == 2) cfg.extent[2] = 1.0;
    } else if (qual == "domain.center") {
      const auto toks = split_ws(val);
      if (toks.size() < 2 || toks.size() > 3)
        throw ConfigError("domain.center needs 2 or 3 coordinates");
      cfg.center.setZero();
      for (std::size_t i = 0; i < toks.size(); ++i)
        cfg.center[static_cast<int>(i)] = parse_number(toks[i]);
    } else if (qual == "domain.radius") {
      cfg.radius = parse_number(val);
    } else if (qual == "lattice.eps") {
      cfg.eps = parse_number(val);
    } else if (qual == "dynamics.particles") {
      cfg.particles = parse_int(val);
    } else if (qual == "dynamics.t_end") {
      cfg.t_end = parse_number(val);
    } else if (qual == "dynamics.seed") {
      cfg.seed = static_cast<std::uint64_t>(parse_int(val));
    } else if (qual == "dynamics.preset") {
      cfg.preset = val;
    } else if (qual == "dynamics.sweep_particles") {
      for (const auto& t : split_ws(val))
        cfg.sweep_particles.push_back(parse_int(t));
    } else if (qual == "dynamics.budget_events") {
      cfg.budget_events = parse_int(val);
    } else if (qual == "observables.sample_times") {
      for (const auto& t : split_ws(val))
        cfg.sample_times.push_back(parse_number(t));
    } else if (qual == "observables.sample_dt") {
      cfg.sample_dt = parse_number(val);
    } else if (qual == "observables.modes") {
      cfg.modes.clear();
      for (const auto& t : split_ws(val))
        cfg.modes.push_back(static_cast<int>(parse_int(t)));
    } else if (qual == "observables.n_modes") {
      cfg.n_modes = static_cast<int>(parse_int(val));
    } else if (qual == "observables.basis") {
      if (val != "numeric" && val != "closed_form")
        throw ConfigError("observables.basis must be numeric or closed_form");
      cfg.basis = val;
    } else if (qual == "observables.record_events") {
      cfg.record_events = parse_bool(val);
    } else if (qual == "observables.snapshots") {
      cfg.snapshots = parse_bool(val);
    } else if (qual == "observables.delta") {
      cfg.delta = parse_number(val);
    } else if (qual == "output.dir") {
      cfg.out_dir = val;
    } else if (qual == "output.write_svg") {
      cfg.write_svg = parse_bool(val);
    } else if (qual == "output.replicas") {
      cfg.replicas = static_cast<int>(parse_int(val));
    } else {
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key " +
                        qual);
    }
  }

  // cross-field validation
  if (cfg.eps <= 0) throw ConfigError("lattice.eps must be positive");
  if (cfg.particles < 1) throw ConfigError("dynamics.particles must be >= 1");
  if (cfg.t_end < 0) throw ConfigError("dynamics.t_end must be >= 0");
  if (cfg.sample_dt <= 0 && cfg.sample_times.empty())
    throw ConfigError("observables.sample_dt must be positive");
  if (cfg.n_modes < 1) throw ConfigError("observables.n_modes must be >= 1");
  if (cfg.delta <= 0) throw ConfigError("observables.delta must be positive");
  if (cfg.radius <= 0) throw ConfigError("domain.radius must be positive");
  if (cfg.replicas < 1) throw ConfigError("output.replicas must be >= 1");
  for (double e : {cfg.extent[0], cfg.extent[1], cfg.extent[2]})
    if (e <= 0) throw ConfigError("domain.extent entries must be positive");
  for (int m : cfg.modes)
    if (m < 0 || m >= cfg.n_modes)
      throw ConfigError("observables.modes entries must lie in [0, n_modes)");
  if (!std::is_sorted(cfg.sample_times.begin(), cfg.sample_times.end()))
    throw ConfigError("observables.sample_times must be ascending");
  for (auto n : cfg.sweep_particles)
    if (n < 1) throw ConfigError("dynamics.sweep_particles must be >= 1");
  (void)extent_set;
  parse_preset(cfg.preset, cfg.dim);  // validate early
  return cfg;
}

Config parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

Config parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  return parse_config(in);
}

Preset parse_preset(const std::string& text, int dim) {
  const auto colon = text.find(':');
  const std::string head = colon == std::string::npos ? text : text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
  Preset p;
  if (head == "eigenmode") {
    p.kind = Preset::Kind::eigenmode;
    std::vector<int> m;
    std::string tok;
    std::istringstream in(rest);
    while (std::getline(in, tok, ','))
      m.push_back(static_cast<int>(parse_int(trim(tok))));
    if (static_cast<int>(m.size()) != dim)
      throw ConfigError("preset eigenmode needs " + std::to_string(dim) +
                        " comma-separated indices");
    p.mode = {0, 0, 0};
    bool any = false;
    for (int c = 0; c < dim; ++c) {
      if (m[c] < 0) throw ConfigError("preset eigenmode indices must be >= 0");
      any = any || m[c] > 0;
      p.mode[c] = m[c];
    }
    if (!any)
      throw ConfigError("preset eigenmode:0,... has no sign change and cannot "
                        "seed both species");
  } else if (head == "half_split") {
    p.kind = Preset::Kind::half_split;
    p.axis = static_cast<int>(parse_int(trim(rest)));
    if (p.axis < 0 || p.axis >= dim)
      throw ConfigError("preset half_split axis out of range");
  } else if (head == "grid_file") {
    p.kind = Preset::Kind::grid_file;
    if (rest.empty()) throw ConfigError("preset grid_file needs a path");
    p.path = rest;
  } else {
    throw ConfigError("unknown preset '" + head + "'");
  }
  return p;
}

std::string render_config(const Config& cfg) {
  std::ostringstream out;
  out << "[domain]\n";
  out << "shape = " << cfg.shape << "\n";
  out << "dim = " << cfg.dim << "\n";
  if (cfg.shape == "rectangle") {
    out << "extent =";
    for (int c = 0; c < cfg.dim; ++c) out << " " << format17(cfg.extent[c]);
    out << "\n";
  } else {
    out << "center =";
    for (int c = 0; c < cfg.dim; ++c) out << " " << format17(cfg.center[c]);
    out << "\n";
    out << "radius = " << format17(cfg.radius) << "\n";
  }
  out << "\n[lattice]\n";
  out << "eps = " << format17(cfg.eps) << "\n";
  out << "\n[dynamics]\n";
  out << "particles = " << cfg.particles << "\n";
  out << "t_end = " << format17(cfg.t_end) << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "preset = " << cfg.preset << "\n";
  if (!cfg.sweep_particles.empty()) {
    out << "sweep_particles =";
    for (auto n : cfg.sweep_particles) out << " " << n;
    out << "\n";
  }
  out << "budget_events = " << cfg.budget_events << "\n";
  out << "\n[observables]\n";
  if (!cfg.sample_times.empty()) {
    out << "sample_times =";
    for (double t : cfg.sample_times) out << " " << format17(t);
    out << "\n";
  } else {
    out << "sample_dt = " << format17(cfg.sample_dt) << "\n";
  }
  out << "modes =";
  for (int m : cfg.modes) out << " " << m;
  out << "\n";
  out << "n_modes = " << cfg.n_modes << "\n";
  out << "basis = " << cfg.basis << "\n";
  out << "record_events = " << (cfg.record_events ? "true" : "false") << "\n";
  out << "snapshots = " << (cfg.snapshots ? "true" : "false") << "\n";
  out << "delta = " << format17(cfg.delta) << "\n";
  out << "\n[output]\n";
  out << "dir = " << cfg.out_dir << "\n";
  out << "write_svg = " << (cfg.write_svg ? "true" : "false") << "\n";
  out << "replicas = " << cfg.replicas << "\n";
  return out.str();
}

}  // namespace abrw
