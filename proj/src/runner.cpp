#include "abrw/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>

#include "abrw/analysis.hpp"
#include "abrw/dynamics.hpp"
#include "abrw/errors.hpp"
#include "abrw/operators.hpp"
#include "abrw/spectral.hpp"

namespace fs = std::filesystem;

namespace abrw {

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

DomainSpec make_domain(const Config& cfg) {
  if (cfg.shape == "rectangle") {
    return cfg.dim == 2
               ? DomainSpec::rectangle(cfg.extent[0], cfg.extent[1])
               : DomainSpec::rectangle(cfg.extent[0], cfg.extent[1],
                                       cfg.extent[2]);
  }
  return DomainSpec::disc(cfg.center, cfg.radius, cfg.dim);
}

std::vector<double> resolve_sample_times(const Config& cfg) {
  if (!cfg.sample_times.empty()) {
    if (cfg.sample_times.back() > cfg.t_end + 1e-12)
      throw ConfigError("sample_times extend past t_end");
    return cfg.sample_times;
  }
  std::vector<double> times{0.0};
  for (int k = 1; k * cfg.sample_dt < cfg.t_end - 1e-12; ++k)
    times.push_back(k * cfg.sample_dt);
  times.push_back(cfg.t_end);
  return times;
}

Eigen::VectorXd initial_density(const Config& cfg, const DomainSpec& dom,
                                const Lattice& lat) {
  const Preset p = parse_preset(cfg.preset, cfg.dim);
  const int n = lat.n_sites();
  Eigen::VectorXd u(n);
  switch (p.kind) {
    case Preset::Kind::eigenmode: {
      if (dom.kind != DomainSpec::Kind::rectangle)
        throw ConfigError("preset eigenmode requires a rectangle domain");
      const double pi = 3.14159265358979323846;
      for (int i = 0; i < n; ++i) {
        const Eigen::Vector3d x = lat.position(i);
        double val = 1.0;
        for (int c = 0; c < cfg.dim; ++c)
          val *= std::cos(p.mode[c] * pi * x[c] / dom.extent[c]);
        u[i] = val;
      }
      break;
    }
    case Preset::Kind::half_split: {
      const double mid = 0.5 * (dom.box_lo[p.axis] + dom.box_hi[p.axis]);
      for (int i = 0; i < n; ++i)
        u[i] = lat.position(i)[p.axis] < mid - 1e-12 ? 1.0 : -1.0;
      break;
    }
    case Preset::Kind::grid_file: {
      const GridFile g = read_grid_file(p.path);
      if (g.values.size() != n)
        throw ConfigError("grid file has " + std::to_string(g.values.size()) +
                          " values for a lattice of " + std::to_string(n) +
                          " sites");
      u = g.values;
      break;
    }
  }
  return u;
}

Configuration initial_configuration(const Config& cfg, const DomainSpec& dom,
                                    const Lattice& lat) {
  const Eigen::VectorXd u = initial_density(cfg, dom, lat);
  try {
    return init_from_density(u, cfg.particles, lat);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("initial condition: ") + e.what());
  }
}

SpectralBasis make_basis(const Config& cfg, const DomainSpec& dom,
                         const Lattice& lat) {
  if (cfg.basis == "closed_form") {
    if (dom.kind != DomainSpec::Kind::rectangle)
      throw ConfigError("closed_form basis requires a rectangle domain");
    return closed_form_basis(dom, lat, cfg.n_modes);
  }
  return eig_neumann(lat, cfg.n_modes);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir);
}

void note_output(RunManifest& m, const std::string& dir,
                 const std::string& rel) {
  m.outputs.push_back({rel, fnv1a64_file_hex((fs::path(dir) / rel).string())});
}

void add_summary(RunManifest& m, const std::string& key, double v) {
  m.summary.emplace_back(key, format17(v));
}
void add_summary(RunManifest& m, const std::string& key, std::int64_t v) {
  m.summary.emplace_back(key, std::to_string(v));
}

// --------------------------------------------------------------------------
// SVG heatmaps (d = 2): one shared symmetric diverging scale across panels
// --------------------------------------------------------------------------

std::string diverging_color(double u) {
  u = std::clamp(u, -1.0, 1.0);
  int r, g, b;
  if (u >= 0) {
    r = static_cast<int>(247 + (178 - 247) * u);
    g = static_cast<int>(247 + (24 - 247) * u);
    b = static_cast<int>(247 + (43 - 247) * u);
  } else {
    r = static_cast<int>(247 + (33 - 247) * -u);
    g = static_cast<int>(247 + (102 - 247) * -u);
    b = static_cast<int>(247 + (172 - 247) * -u);
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "rgb(%d,%d,%d)", r, g, b);
  return buf;
}

std::string heatmap_svg(
    const Lattice& lat,
    const std::vector<std::pair<std::string, Eigen::VectorXd>>& panels) {
  if (lat.dim != 2) throw std::invalid_argument("heatmap: d = 2 only");
  int k1lo = lat.coords[0][0], k1hi = k1lo;
  int k2lo = lat.coords[0][1], k2hi = k2lo;
  for (const auto& kc : lat.coords) {
    k1lo = std::min(k1lo, kc[0]);
    k1hi = std::max(k1hi, kc[0]);
    k2lo = std::min(k2lo, kc[1]);
    k2hi = std::max(k2hi, kc[1]);
  }
  const int nx = k1hi - k1lo + 1, ny = k2hi - k2lo + 1;
  const double px = std::min(360.0 / nx, 360.0 / ny);
  const double w = nx * px, h = ny * px;
  const double gap = 24.0, top = 26.0, bottom = 22.0;
  double vmax = 0.0;
  for (const auto& [_, v] : panels) vmax = std::max(vmax, v.cwiseAbs().maxCoeff());
  if (vmax == 0.0) vmax = 1.0;

  std::ostringstream svg;
  const double W = panels.size() * (w + gap) + gap;
  const double H = top + h + bottom;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H
      << "\">\n";
  svg << "<rect width=\"" << W << "\" height=\"" << H
      << "\" fill=\"white\"/>\n";
  for (std::size_t pidx = 0; pidx < panels.size(); ++pidx) {
    const double x0 = gap + pidx * (w + gap);
    svg << "<text x=\"" << x0 << "\" y=\"16\" font-family=\"sans-serif\" "
           "font-size=\"13\">"
        << panels[pidx].first << "</text>\n";
    for (int i = 0; i < lat.n_sites(); ++i) {
      const double cx = x0 + (lat.coords[i][0] - k1lo) * px;
      const double cy = top + (k2hi - lat.coords[i][1]) * px;
      svg << "<rect x=\"" << cx << "\" y=\"" << cy << "\" width=\"" << px + 0.5
          << "\" height=\"" << px + 0.5 << "\" fill=\""
          << diverging_color(panels[pidx].second[i] / vmax) << "\"/>\n";
    }
    svg << "<rect x=\"" << x0 << "\" y=\"" << top << "\" width=\"" << w
        << "\" height=\"" << h
        << "\" fill=\"none\" stroke=\"#888\" stroke-width=\"0.6\"/>\n";
  }
  svg << "<text x=\"" << gap << "\" y=\"" << H - 6
      << "\" font-family=\"sans-serif\" font-size=\"11\">signed scale: blue "
         "-"
      << format17(vmax) << " .. red +" << format17(vmax) << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << text;
}

std::uint64_t manifest_stream(const RunManifest& m) {
  for (const auto& [k, v] : m.summary)
    if (k == "stream") return std::stoull(v);
  return 0;
}

}  // namespace

LoadedConfig load_config_or_manifest(const std::string& path) {
  LoadedConfig lc;
  if (looks_like_manifest(path)) {
    lc.manifest = read_manifest(path);
    lc.cfg = parse_config_string(lc.manifest.config_text);
    lc.cfg.seed = lc.manifest.seed;
    lc.from_manifest = true;
  } else {
    lc.cfg = parse_config_file(path);
  }
  return lc;
}

void apply_overrides(Config& cfg, const CliOverrides& ov) {
  if (ov.out_dir) cfg.out_dir = *ov.out_dir;
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.budget_events) cfg.budget_events = *ov.budget_events;
  if (ov.replicas) cfg.replicas = *ov.replicas;
}

// --------------------------------------------------------------------------

int cmd_lattice(const Config& cfg) {
  const DomainSpec dom = make_domain(cfg);
  const Lattice lat = build_lattice(dom, cfg.eps);
  const LatticeCheckReport rep = check_jump_constraints(lat);

  int n_boundary = 0;
  for (auto b : lat.boundary) n_boundary += b;
  std::printf("sites %d (pruned %d)  boundary %d  interior %d\n",
              lat.n_sites(), lat.pruned_sites, n_boundary,
              lat.n_sites() - n_boundary);
  std::printf("row-sum residual %.3e  tangential residual %.3e (units of eps)\n",
              rep.max_prob_row_residual, rep.max_tangential_residual);
  std::printf("min inward drift %.6f (units of eps)\n", rep.min_c1);

  ensure_dir(cfg.out_dir);
  export_lattice_file(lat, (fs::path(cfg.out_dir) / "lattice.txt").string());

  RunManifest m;
  m.command = "lattice";
  m.seed = cfg.seed;
  m.config_text = render_config(cfg);
  note_output(m, cfg.out_dir, "lattice.txt");
  add_summary(m, "sites", static_cast<std::int64_t>(lat.n_sites()));
  add_summary(m, "pruned", static_cast<std::int64_t>(lat.pruned_sites));
  add_summary(m, "boundary", static_cast<std::int64_t>(n_boundary));
  add_summary(m, "max_row_residual", rep.max_prob_row_residual);
  add_summary(m, "max_tangential_residual", rep.max_tangential_residual);
  add_summary(m, "min_c1", rep.min_c1);
  write_manifest(m, (fs::path(cfg.out_dir) / "manifest.json").string());
  std::printf("wrote %s\n",
              (fs::path(cfg.out_dir) / "lattice.txt").string().c_str());

  const bool pass = rep.max_prob_row_residual <= 1e-12 &&
                    rep.max_tangential_residual <= 1e-10 && rep.min_c1 > 0;
  if (!pass) std::printf("constraint check FAILED\n");
  return pass ? exit_ok : exit_failure;
}

int cmd_eig(const Config& cfg) {
  const DomainSpec dom = make_domain(cfg);
  const Lattice lat = build_lattice(dom, cfg.eps);
  const SpectralBasis basis = make_basis(cfg, dom, lat);

  const bool have_cf = dom.kind == DomainSpec::Kind::rectangle &&
                       basis.origin == SpectralBasis::Origin::numeric;
  SpectralBasis cf;
  if (have_cf) cf = closed_form_basis(dom, lat, cfg.n_modes);

  std::printf("%-4s %-22s %-12s", "n", "lambda", "residual");
  if (have_cf) std::printf(" %-22s %-8s", "closed-form", "ratio");
  std::printf("\n");
  for (int j = 0; j < basis.k(); ++j) {
    std::printf("%-4d %-22.15g %-12.3e", j, basis.lambda[j], basis.residual[j]);
    if (have_cf)
      std::printf(" %-22.15g %-8.5f", cf.lambda[j],
                  cf.lambda[j] > 0 ? basis.lambda[j] / cf.lambda[j] : 1.0);
    std::printf("\n");
  }

  ensure_dir(cfg.out_dir);
  export_basis_file(basis, (fs::path(cfg.out_dir) / "basis.txt").string());

  RunManifest m;
  m.command = "eig";
  m.seed = cfg.seed;
  m.config_text = render_config(cfg);
  note_output(m, cfg.out_dir, "basis.txt");
  add_summary(m, "lambda_0", basis.lambda[0]);
  if (basis.k() > 1) add_summary(m, "lambda_1", basis.lambda[1]);
  add_summary(m, "max_residual", basis.residual.maxCoeff());
  write_manifest(m, (fs::path(cfg.out_dir) / "manifest.json").string());
  return exit_ok;
}

int cmd_simulate(const Config& cfg, const LoadedConfig* rerun) {
  const double t0 = now_seconds();
  const DomainSpec dom = make_domain(cfg);
  const Lattice lat = build_lattice(dom, cfg.eps);
  const SpectralBasis basis = make_basis(cfg, dom, lat);
  Configuration state = initial_configuration(cfg, dom, lat);

  SimParams params;
  params.t_end = cfg.t_end;
  params.seed = cfg.seed;
  params.stream = rerun ? manifest_stream(rerun->manifest) : 0;
  params.sample_times = resolve_sample_times(cfg);
  params.record_events = cfg.record_events;
  params.max_events = cfg.budget_events;

  const ObservableSeries series =
      simulate(lat, std::move(state), params, &basis, cfg.modes, cfg.snapshots);

  ensure_dir(cfg.out_dir);
  RunManifest m;
  m.command = "simulate";
  m.seed = cfg.seed;
  m.config_text = render_config(cfg);

  {
    std::ofstream out(fs::path(cfg.out_dir) / "series.csv");
    write_series_csv(series, out);
  }
  note_output(m, cfg.out_dir, "series.csv");

  double final_deficit = -1.0;
  if (!series.snapshots.empty()) {
    Eigen::VectorXd dens(lat.n_sites());
    const double scale =
        static_cast<double>(series.N) * std::pow(lat.eps, lat.dim);
    for (int i = 0; i < lat.n_sites(); ++i)
      dens[i] = series.snapshots.back()[i] / scale;
    {
      std::ofstream out(fs::path(cfg.out_dir) / "final.grid");
      write_grid(series.times.back(), lat.eps, lat.dim, dens, out);
    }
    note_output(m, cfg.out_dir, "final.grid");
    final_deficit =
        segregation_deficit(series.snapshots.back(), series.N, lat, cfg.delta)
            .deficit;
    if (cfg.write_svg && lat.dim == 2) {
      write_text_file((fs::path(cfg.out_dir) / "final.svg").string(),
                      heatmap_svg(lat, {{"signed density at t_end", dens}}));
      note_output(m, cfg.out_dir, "final.svg");
    }
  }
  if (cfg.record_events) {
    {
      std::ofstream out(fs::path(cfg.out_dir) / "events.ndjson");
      write_events_ndjson(series.events, out);
    }  // closed before hashing
    note_output(m, cfg.out_dir, "events.ndjson");
  }

  add_summary(m, "stream", static_cast<std::int64_t>(params.stream));
  add_summary(m, "annihilations", series.K.back());
  add_summary(m, "final_V", series.V.back());
  if (final_deficit >= 0) add_summary(m, "final_deficit", final_deficit);
  add_summary(m, "walltime_s", now_seconds() - t0);
  write_manifest(m, (fs::path(cfg.out_dir) / "manifest.json").string());

  std::printf("t_end %.6g  annihilations %lld  final V %.6g",
              series.times.back(),
              static_cast<long long>(series.K.back()), series.V.back());
  if (final_deficit >= 0) std::printf("  final deficit %.4f", final_deficit);
  std::printf("\n");

  if (rerun) {
    int mismatches = 0;
    for (const auto& o : rerun->manifest.outputs) {
      const std::string fresh =
          fnv1a64_file_hex((fs::path(cfg.out_dir) / o.path).string());
      const bool same = fresh == o.digest;
      std::printf("rerun %-14s recorded %s fresh %s %s\n", o.path.c_str(),
                  o.digest.c_str(), fresh.c_str(), same ? "ok" : "MISMATCH");
      mismatches += !same;
    }
    if (mismatches == 0) {
      std::printf("rerun reproduced %zu outputs bit-identically\n",
                  rerun->manifest.outputs.size());
      return exit_ok;
    }
    std::printf("rerun FAILED: %d outputs differ\n", mismatches);
    return exit_failure;
  }
  return exit_ok;
}

int cmd_evolve(const Config& cfg) {
  const DomainSpec dom = make_domain(cfg);
  const Lattice lat = build_lattice(dom, cfg.eps);
  // densities evolve under the adjoint of the site generator
  const LinearOperator fwd = adjoint_laplacian(lat);
  const HeatEvolver evolver(fwd);

  const Eigen::VectorXd u0 =
      normalize_tv(initial_density(cfg, dom, lat), lat.eps, lat.dim);
  const std::vector<double> times = resolve_sample_times(cfg);

  ensure_dir(cfg.out_dir);
  std::ofstream csv(fs::path(cfg.out_dir) / "evolve.csv");
  csv << "t,total_variation,C,logC_over_t\n";
  Eigen::VectorXd last = u0;
  for (double t : times) {
    last = evolver.evolve(u0, t);
    const double tv =
        std::pow(lat.eps, lat.dim) * last.cwiseAbs().sum();
    const double C = 2.0 / std::max(tv, 1e-300);
    csv << format17(t) << "," << format17(tv) << "," << format17(C) << ","
        << format17(t > 0 ? std::log(C) / t : 0.0) << "\n";
  }
  csv.close();

  {
    std::ofstream out(fs::path(cfg.out_dir) / "evolve_final.grid");
    write_grid(times.back(), lat.eps, lat.dim, last, out);
  }

  RunManifest m;
  m.command = "evolve";
  m.seed = cfg.seed;
  m.config_text = render_config(cfg);
  note_output(m, cfg.out_dir, "evolve.csv");
  note_output(m, cfg.out_dir, "evolve_final.grid");
  const double tvT = std::pow(lat.eps, lat.dim) * last.cwiseAbs().sum();
  add_summary(m, "final_tv", tvT);
  if (times.back() > 0)
    add_summary(m, "final_logC_over_t",
                std::log(2.0 / std::max(tvT, 1e-300)) / times.back());
  write_manifest(m, (fs::path(cfg.out_dir) / "manifest.json").string());
  std::printf("evolved to t %.6g  TV %.6g\n", times.back(), tvT);
  return exit_ok;
}

int cmd_compare(const Config& cfg) {
  const DomainSpec dom = make_domain(cfg);
  const Lattice lat = build_lattice(dom, cfg.eps);
  const SpectralBasis basis = make_basis(cfg, dom, lat);
  Configuration state = initial_configuration(cfg, dom, lat);

  SimParams params;
  params.t_end = cfg.t_end;
  params.seed = cfg.seed;
  params.sample_times = resolve_sample_times(cfg);
  params.max_events = cfg.budget_events;

  const ObservableSeries series =
      simulate(lat, std::move(state), params, &basis, cfg.modes, true);

  const LinearOperator fwd = adjoint_laplacian(lat);
  const HeatEvolver evolver(fwd);
  const ComparisonReport rep = compare_to_limit(series, lat, evolver, cfg.delta);

  ensure_dir(cfg.out_dir);
  std::ofstream csv(fs::path(cfg.out_dir) / "compare.csv");
  csv << "t,block_l1,deficit\n";
  for (std::size_t i = 0; i < rep.t.size(); ++i) {
    const double deficit =
        segregation_deficit(series.snapshots[i], series.N, lat, cfg.delta)
            .deficit;
    csv << format17(rep.t[i]) << "," << format17(rep.distance[i]) << ","
        << format17(deficit) << "\n";
  }
  csv.close();

  RunManifest m;
  m.command = "compare";
  m.seed = cfg.seed;
  m.config_text = render_config(cfg);
  note_output(m, cfg.out_dir, "compare.csv");

  if (cfg.write_svg && lat.dim == 2) {
    const int n = lat.n_sites();
    const double scale =
        static_cast<double>(series.N) * std::pow(lat.eps, lat.dim);
    Eigen::VectorXd emp(n), u0(n);
    for (int i = 0; i < n; ++i) {
      emp[i] = series.snapshots.back()[i] / scale;
      u0[i] = series.snapshots.front()[i] / scale;
    }
    const Eigen::VectorXd ref = normalize_tv(
        evolver.evolve(u0, series.times.back()), lat.eps, lat.dim);
    write_text_file(
        (fs::path(cfg.out_dir) / "side_by_side.svg").string(),
        heatmap_svg(lat, {{"empirical signed density", emp},
                          {"normalized heat reference", ref}}));
    note_output(m, cfg.out_dir, "side_by_side.svg");
  }

  // time-averaged event intensity over the second half vs the spectral gap
  const IntegratedV iv = integrated_V(series);
  double avg_v = 0.0;
  if (series.times.back() > 0) {
    const double T = series.times.back();
    std::size_t half = 0;
    while (half + 1 < series.times.size() && series.times[half] < 0.5 * T)
      ++half;
    const double span = T - series.times[half];
    if (span > 0)
      avg_v = (iv.from_counts.back() - iv.from_counts[half]) / span;
  }
  add_summary(m, "final_block_l1", rep.distance.back());
  add_summary(m, "final_deficit", rep.final_deficit);
  add_summary(m, "avg_V_second_half", avg_v);
  if (basis.k() > 1) add_summary(m, "lambda_1", basis.lambda[1]);
  write_manifest(m, (fs::path(cfg.out_dir) / "manifest.json").string());

  std::printf("final block-L1 %.5f  final deficit %.5f  avg V %.5f",
              rep.distance.back(), rep.final_deficit, avg_v);
  if (basis.k() > 1) {
    // each annihilation rebirths one pair at event rate (N/2)V, so a
    // shape-stationary mode amplitude pins avg V near twice the spectral gap
    std::printf("  lambda_1 %.5f  avg_V/(2 lambda_1) %.4f", basis.lambda[1],
                avg_v / (2.0 * basis.lambda[1]));
  }
  std::printf("\n");
  return exit_ok;
}

int cmd_sweep(const Config& cfg) {
  if (cfg.sweep_particles.empty())
    throw ConfigError("sweep requires dynamics.sweep_particles");
  if (cfg.modes.empty()) throw ConfigError("sweep requires observables.modes");
  const int mode = cfg.modes.front();

  const DomainSpec dom = make_domain(cfg);
  const Lattice lat = build_lattice(dom, cfg.eps);
  const SpectralBasis basis = make_basis(cfg, dom, lat);
  const Eigen::VectorXd u0 = initial_density(cfg, dom, lat);
  const std::vector<double> times = resolve_sample_times(cfg);

  std::vector<std::int64_t> ns = cfg.sweep_particles;
  std::sort(ns.begin(), ns.end());

  struct Task {
    std::int64_t n;
    int rep;
    std::string dir;
    std::uint64_t stream;
  };
  std::vector<Task> tasks;
  for (std::size_t j = 0; j < ns.size(); ++j)
    for (int r = 0; r < cfg.replicas; ++r) {
      std::ostringstream dir;
      dir << cfg.out_dir << "/sweep/n" << ns[j] << "/rep"
          << (r < 10 ? "0" : "") << r;
      tasks.push_back(
          {ns[j], r, dir.str(),
           static_cast<std::uint64_t>(j) * 1'000'000ull +
               static_cast<std::uint64_t>(r)});
    }

  // replica results live on disk; bit-identical replicas are skipped
  std::vector<ObservableSeries> results(tasks.size());
  std::atomic<std::size_t> cursor{0};
  std::mutex io_mutex;
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t idx = cursor.fetch_add(1);
      if (idx >= tasks.size()) return;
      const Task& task = tasks[idx];
      try {
        Config rc = cfg;
        rc.particles = task.n;
        rc.out_dir = task.dir;

        const std::string manifest_path = task.dir + "/manifest.json";
        bool resumed = false;
        if (fs::exists(manifest_path)) {
          RunManifest prev = read_manifest(manifest_path);
          bool intact = prev.config_text == render_config(rc) &&
                        prev.seed == rc.seed &&
                        manifest_stream(prev) == task.stream;
          for (const auto& o : prev.outputs) {
            const std::string p = task.dir + "/" + o.path;
            intact = intact && fs::exists(p) && fnv1a64_file_hex(p) == o.digest;
          }
          if (intact) {
            std::ifstream in(task.dir + "/series.csv");
            ObservableSeries s = read_series_csv(in);
            s.eps = lat.eps;
            s.dim = lat.dim;
            s.N = task.n;
            s.seed = rc.seed;
            results[idx] = std::move(s);
            resumed = true;
          }
        }
        if (!resumed) {
          Configuration state = [&] {
            try {
              return init_from_density(u0, task.n, lat);
            } catch (const std::invalid_argument& e) {
              throw ConfigError(std::string("initial condition: ") + e.what());
            }
          }();
          SimParams params;
          params.t_end = rc.t_end;
          params.seed = rc.seed;
          params.stream = task.stream;
          params.sample_times = times;
          params.max_events = rc.budget_events;
          ObservableSeries s = simulate(lat, std::move(state), params, &basis,
                                        rc.modes, false);
          ensure_dir(task.dir);
          {
            std::ofstream out(task.dir + "/series.csv");
            write_series_csv(s, out);
          }
          RunManifest m;
          m.command = "sweep-replica";
          m.seed = rc.seed;
          m.config_text = render_config(rc);
          note_output(m, task.dir, "series.csv");
          add_summary(m, "stream", static_cast<std::int64_t>(task.stream));
          add_summary(m, "annihilations", s.K.back());
          write_manifest(m, manifest_path);
          results[idx] = std::move(s);
        }
        std::lock_guard<std::mutex> lock(io_mutex);
        std::printf("%s n %lld replica %d%s\n",
                    resumed ? "resumed" : "finished",
                    static_cast<long long>(task.n), task.rep,
                    resumed ? " (digest verified)" : "");
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t n_threads = std::min<std::size_t>(hw, tasks.size());
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < n_threads; ++i) threads.emplace_back(worker);
  for (auto& th : threads) th.join();
  if (first_error) std::rethrow_exception(first_error);

  // deterministic aggregation in (N, replica) order
  ensure_dir(cfg.out_dir);
  std::ofstream csv(fs::path(cfg.out_dir) / "sweep.csv");
  csv << "n_particles,replica,uhat_final,annihilations\n";
  std::vector<std::pair<std::int64_t, std::vector<double>>> amplitudes;
  std::vector<std::pair<std::int64_t, std::vector<ObservableSeries>>> by_n;
  std::size_t idx = 0;
  int mode_col = 0;
  for (std::size_t j = 0; j < cfg.modes.size(); ++j)
    if (cfg.modes[j] == mode) mode_col = static_cast<int>(j);
  for (std::size_t j = 0; j < ns.size(); ++j) {
    std::vector<double> amps;
    std::vector<ObservableSeries> group;
    for (int r = 0; r < cfg.replicas; ++r, ++idx) {
      const ObservableSeries& s = results[idx];
      amps.push_back(s.uhat(s.n_samples() - 1, mode_col));
      csv << ns[j] << "," << r << "," << format17(amps.back()) << ","
          << s.K.back() << "\n";
      group.push_back(s);
    }
    amplitudes.emplace_back(ns[j], std::move(amps));
    by_n.emplace_back(ns[j], std::move(group));
  }
  csv.close();

  RunManifest m;
  m.command = "sweep";
  m.seed = cfg.seed;
  m.config_text = render_config(cfg);
  note_output(m, cfg.out_dir, "sweep.csv");

  int code = exit_ok;
  if (ns.size() < 3 || cfg.replicas < 16)
    std::printf("sweep too small for variance slope fitting "
                "(need >= 3 population sizes and >= 16 replicas)\n");
  if (ns.size() >= 3 && cfg.replicas >= 16) {
    const NoiseScalingReport noise = noise_scaling(amplitudes);
    std::printf("variance slope %.4f +- %.4f (replicas %d)\n", noise.slope,
                noise.half_width, noise.replicas);
    for (std::size_t j = 0; j < noise.n_particles.size(); ++j)
      std::printf("  n %lld  var %.6e\n",
                  static_cast<long long>(noise.n_particles[j]),
                  noise.variance[j]);
    add_summary(m, "variance_slope", noise.slope);
    add_summary(m, "variance_slope_half_width", noise.half_width);
  }
  if (ns.size() >= 2 && cfg.replicas >= 8) {
    const QvScalingReport qv = qv_scaling(by_n, basis, mode);
    std::printf("qv bound beta %.5f  holds at larger n: %s\n", qv.beta_hat,
                qv.bound_holds ? "yes" : "NO");
    for (std::size_t j = 0; j < qv.n_particles.size(); ++j)
      std::printf("  n %lld  mean qv ratio %.5f\n",
                  static_cast<long long>(qv.n_particles[j]), qv.mean_ratio[j]);
    add_summary(m, "qv_beta_hat", qv.beta_hat);
    m.summary.emplace_back("qv_bound_holds", qv.bound_holds ? "yes" : "no");
    if (!qv.bound_holds) code = exit_failure;
  }
  write_manifest(m, (fs::path(cfg.out_dir) / "manifest.json").string());
  return code;
}

// --------------------------------------------------------------------------

int cmd_selftest() {
  const double t_start = now_seconds();
  bool all_ok = true;
  const auto line = [&](const char* name, bool pass, const std::string& note) {
    std::printf("selftest %-28s %s%s%s\n", name, pass ? "ok" : "FAIL",
                note.empty() ? "" : "  ", note.c_str());
    all_ok = all_ok && pass;
  };
  char buf[256];

  // lattice constraints on both canonical shapes
  const DomainSpec square = DomainSpec::rectangle(1.0, 1.0);
  const Lattice sq = build_lattice(square, 1.0 / 8);
  {
    const LatticeCheckReport rep = check_jump_constraints(sq);
    std::snprintf(buf, sizeof buf, "row %.1e tan %.1e c1 %.3f",
                  rep.max_prob_row_residual, rep.max_tangential_residual,
                  rep.min_c1);
    line("square lattice constraints",
         rep.max_prob_row_residual <= 1e-12 &&
             rep.max_tangential_residual <= 1e-10 && rep.min_c1 > 0,
         buf);
  }
  {
    const DomainSpec disc =
        DomainSpec::disc(Eigen::Vector3d(0.5, 0.5, 0.0), 0.5, 2);
    const Lattice dl = build_lattice(disc, 1.0 / 8);
    const LatticeCheckReport rep = check_jump_constraints(dl);
    std::snprintf(buf, sizeof buf, "sites %d row %.1e tan %.1e c1 %.3f",
                  dl.n_sites(), rep.max_prob_row_residual,
                  rep.max_tangential_residual, rep.min_c1);
    line("disc lattice constraints",
         rep.max_prob_row_residual <= 1e-12 &&
             rep.max_tangential_residual <= 1e-10 && rep.min_c1 > 0,
         buf);
  }
  {
    // negative control: a corrupted jump row must be flagged with its site
    Lattice bad = sq;
    int site = -1;
    for (int i = 0; i < bad.n_sites(); ++i)
      if (bad.boundary[i]) {
        site = i;
        break;
      }
    bad.jump_prob[site][0] *= 1.05;
    const LatticeCheckReport rep = check_jump_constraints(bad);
    std::snprintf(buf, sizeof buf, "corrupted site %d reported %d", site,
                  rep.bad_row_site);
    line("corruption detected", rep.bad_row_site == site, buf);
  }
  {
    // generator identity on random small configurations
    CounterRng rng(42, 0);
    double worst = 0.0;
    const Lattice small = build_lattice(square, 1.0 / 4);
    for (int trial = 0; trial < 10; ++trial) {
      Configuration c;
      c.eta = Eigen::VectorXi::Zero(small.n_sites());
      for (int j = 0; j < 4; ++j) {
        int s;
        do
          s = static_cast<int>(rng.uniform_index(small.n_sites()));
        while (c.eta[s] < 0);
        c.eta[s] += 1;
        c.plus_sites.push_back(s);
      }
      for (int j = 0; j < 4; ++j) {
        int s;
        do
          s = static_cast<int>(rng.uniform_index(small.n_sites()));
        while (c.eta[s] > 0);
        c.eta[s] -= 1;
        c.minus_sites.push_back(s);
      }
      const int z = static_cast<int>(rng.uniform_index(small.n_sites()));
      const double lhs = generator_apply(
          [z](const Eigen::VectorXi& eta) {
            return static_cast<double>(eta[z]);
          },
          c, small);
      const LinearOperator adj = adjoint_laplacian(small);
      const Eigen::VectorXd eta_d = c.eta.cast<double>();
      // per-event branching adds one pair at rate (N/2)V, so the drift of
      // eta_z carries V/2, not V
      const double rhs =
          adj.apply(eta_d)[z] +
          0.5 * compute_V(c, small) * static_cast<double>(c.eta[z]);
      worst = std::max(worst, std::abs(lhs - rhs));
    }
    std::snprintf(buf, sizeof buf, "max |Lf - (adjoint + (V/2) eta)| = %.2e",
                  worst);
    line("generator identity", worst <= 1e-10, buf);
  }
  {
    const SpectralBasis b = eig_neumann(sq, 4);
    const double lam_ref = 3.14159265358979323846 * 3.14159265358979323846 / 4;
    const double spread = (b.modes.col(0).maxCoeff() - b.modes.col(0).minCoeff());
    std::snprintf(buf, sizeof buf,
                  "lambda0 %.1e lambda1 %.4f (expect near %.4f) split %.1e",
                  std::abs(b.lambda[0]), b.lambda[1], lam_ref,
                  std::abs(b.lambda[1] - b.lambda[2]));
    line("eigenbasis",
         std::abs(b.lambda[0]) <= 1e-8 && spread <= 1e-6 &&
             std::abs(b.lambda[1] - lam_ref) <= 0.15 * lam_ref &&
             std::abs(b.lambda[1] - b.lambda[2]) <= 1e-8 &&
             b.residual.maxCoeff() <= 1e-8,
         buf);
  }
  {
    // uniformization against a dense matrix exponential
    const Lattice small = build_lattice(square, 1.0 / 4);
    const LinearOperator fwd = adjoint_laplacian(small);
    const Eigen::MatrixXd A = Eigen::MatrixXd(fwd.matrix());
    CounterRng rng(7, 0);
    Eigen::VectorXd rho(small.n_sites());
    for (int i = 0; i < rho.size(); ++i) rho[i] = rng.uniform() - 0.5;
    const double t = 0.037;  // keep the dense reference well conditioned
    Eigen::EigenSolver<Eigen::MatrixXd> es(A);
    const Eigen::VectorXcd z = es.eigenvectors().inverse() * rho.cast<std::complex<double>>();
    const Eigen::VectorXd dense =
        (es.eigenvectors() *
         (es.eigenvalues().array() * t).exp().matrix().asDiagonal() * z)
            .real();
    const Eigen::VectorXd uni = evolve_heat(fwd, rho, t);
    const double err = (dense - uni).cwiseAbs().maxCoeff();
    const double mass_gap = std::abs(uni.sum() - rho.sum());
    // constants stay exactly fixed under the site laplacian itself
    const LinearOperator gen = discrete_laplacian(small);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(small.n_sites());
    const double const_err =
        (evolve_heat(gen, ones, 0.25) - ones).cwiseAbs().maxCoeff();
    std::snprintf(buf, sizeof buf, "expm err %.1e mass %.1e const %.1e", err,
                  mass_gap, const_err);
    line("uniformization",
         err <= 1e-9 && mass_gap <= 1e-12 && const_err <= 1e-13, buf);
  }
  {
    // short simulation: invariants, replayable events, exact block identity
    Configuration c;
    const int n = sq.n_sites();
    Eigen::VectorXd dens(n);
    for (int i = 0; i < n; ++i)
      dens[i] = std::cos(3.14159265358979323846 * sq.position(i)[0]);
    c = init_from_density(dens, 64, sq);
    SimParams params;
    params.t_end = 0.2;
    params.seed = 2024;
    params.sample_times = {0.0, 0.1, 0.2};
    params.record_events = true;
    const SpectralBasis b = eig_neumann(sq, 2);
    const ObservableSeries s = simulate(sq, c, params, &b, {1}, true);
    Eigen::VectorXi replay = s.snapshots.front();
    for (const auto& ev : s.events)
      if (ev.t <= s.times.back()) apply_event(ev, replay);
    const bool replay_ok = replay == s.snapshots.back();
    bool identity_ok = true;
    for (const auto& snap : s.snapshots)
      identity_ok = identity_ok &&
                    segregation_deficit(snap, 64, sq, 0.25).identity_exact;
    std::snprintf(buf, sizeof buf, "events %zu annihilations %lld",
                  s.events.size(), static_cast<long long>(s.K.back()));
    line("simulation replay + identity", replay_ok && identity_ok, buf);
  }
  {
    CounterRng a(1, 0), b(1, 0), c(1, 1);
    bool same = true, diff = false, range = true;
    for (int i = 0; i < 1000; ++i) {
      const double ua = a.uniform(), ub = b.uniform(), uc = c.uniform();
      same = same && ua == ub;
      diff = diff || ua != uc;
      range = range && ua >= 0.0 && ua < 1.0;
    }
    line("rng determinism", same && diff && range, "");
  }
  {
    bool ok = true;
    std::string note;
    const Config cfg;
    const std::string r1 = render_config(cfg);
    const Config cfg2 = parse_config_string(r1);
    ok = ok && render_config(cfg2) == r1;
    try {
      parse_config_string("[domain]\nshape = rectangle\nbogus_key = 1\n");
      ok = false;
      note = "unknown key accepted";
    } catch (const ConfigError&) {
    }
    ok = ok && parse_number("1/32") == 0.03125;
    line("config round-trip + rejection", ok, note);
  }

  std::printf("selftest %s in %.1f s\n", all_ok ? "passed" : "FAILED",
              now_seconds() - t_start);
  return all_ok ? exit_ok : exit_failure;
}

}  // namespace abrw
