#pragma once

// Strict INI-style run configuration. Unknown sections or keys, duplicate
// keys, and malformed values are rejected with ConfigError. Numeric values
// accept plain decimals or exact fractions like "1/32".

#include <cstdint>
#include <istream>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace abrw {

struct Config {
  // [domain]
  std::string shape = "rectangle";  // rectangle | disc
  int dim = 2;
  Eigen::Vector3d extent{1.0, 1.0, 1.0};  // rectangle side lengths
  Eigen::Vector3d center{0.0, 0.0, 0.0};  // disc center
  double radius = 1.0;                    // disc radius

  // [lattice]
  double eps = 1.0 / 16.0;

  // [dynamics]
  std::int64_t particles = 1024;       // N per species
  double t_end = 0.5;
  std::uint64_t seed = 1;
  std::string preset = "eigenmode:1,0";
  std::vector<std::int64_t> sweep_particles;  // population sizes for sweeps
  std::int64_t budget_events = 2'000'000'000;

  // [observables]
  std::vector<double> sample_times;  // explicit grid; wins over sample_dt
  double sample_dt = 0.05;
  std::vector<int> modes{1};         // tracked basis modes
  int n_modes = 6;                   // basis size
  std::string basis = "numeric";     // numeric | closed_form
  bool record_events = false;
  bool snapshots = true;
  double delta = 0.125;              // block side for segregation measures

  // [output]
  std::string out_dir = "out";
  bool write_svg = true;
  int replicas = 8;
};

// "1/32" -> 0.03125, "0.5" -> 0.5; throws ConfigError on garbage.
double parse_number(const std::string& text);

Config parse_config(std::istream& in);
Config parse_config_string(const std::string& text);
Config parse_config_file(const std::string& path);

// Recognized initial-condition presets:
//   eigenmode:m1,m2[,m3]  signed product-cosine profile on a rectangle
//   half_split:axis       +1 below the domain midpoint of that axis, -1 above
//   grid_file:path        signed density read from a grid file
struct Preset {
  enum class Kind { eigenmode, half_split, grid_file };
  Kind kind = Kind::eigenmode;
  std::array<int, 3> mode{1, 0, 0};
  int axis = 0;
  std::string path;
};
Preset parse_preset(const std::string& text, int dim);

// Round-trippable rendering of the resolved configuration.
std::string render_config(const Config& cfg);

}  // namespace abrw
