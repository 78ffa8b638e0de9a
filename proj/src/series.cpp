#include "abrw/series.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "abrw/errors.hpp"

namespace abrw {

std::string format17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void apply_event(const EventRecord& ev, Eigen::VectorXi& eta) {
  const int s = ev.species;
  eta[ev.from] -= s;
  eta[ev.to] += s;
  if (ev.kind == EventRecord::Kind::annihilate_branch) {
    eta[ev.branch_same] += s;
    eta[ev.branch_opp] -= s;
  }
}

void write_series_csv(const ObservableSeries& s, std::ostream& out) {
  out << "t,K,V";
  for (int m : s.tracked_modes) out << ",uhat_" << m;
  out << "\n";
  for (int i = 0; i < s.n_samples(); ++i) {
    out << format17(s.times[i]) << "," << s.K[i] << "," << format17(s.V[i]);
    for (int j = 0; j < s.uhat.cols(); ++j) out << "," << format17(s.uhat(i, j));
    out << "\n";
  }
}

ObservableSeries read_series_csv(std::istream& in) {
  ObservableSeries s;
  std::string line;
  if (!std::getline(in, line)) throw LatticeError("series csv: empty file");
  {
    std::stringstream hdr(line);
    std::string cellstr;
    int coln = 0;
    while (std::getline(hdr, cellstr, ',')) {
      if (coln >= 3) {
        if (cellstr.rfind("uhat_", 0) != 0)
          throw LatticeError("series csv: bad header column " + cellstr);
        s.tracked_modes.push_back(std::stoi(cellstr.substr(5)));
      }
      ++coln;
    }
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != 3 + s.tracked_modes.size())
      throw LatticeError("series csv: bad row width");
    rows.push_back(std::move(row));
  }
  const int ns = static_cast<int>(rows.size());
  s.uhat.resize(ns, static_cast<int>(s.tracked_modes.size()));
  for (int i = 0; i < ns; ++i) {
    s.times.push_back(rows[i][0]);
    s.K.push_back(static_cast<std::int64_t>(rows[i][1]));
    s.V.push_back(rows[i][2]);
    for (std::size_t j = 0; j < s.tracked_modes.size(); ++j)
      s.uhat(i, static_cast<int>(j)) = rows[i][3 + j];
  }
  return s;
}

void write_grid(double t, double eps, int dim, const Eigen::VectorXd& values,
                std::ostream& out) {
  out << "abrw-grid-v1\n";
  out << "t " << format17(t) << "\n";
  out << "eps " << format17(eps) << "\n";
  out << "d " << dim << "\n";
  out << "sites " << values.size() << "\n";
  for (int i = 0; i < values.size(); ++i)
    out << i << " " << format17(values[i]) << "\n";
}

GridFile read_grid(std::istream& in) {
  std::string tok;
  in >> tok;
  if (tok != "abrw-grid-v1") throw LatticeError("grid: bad magic");
  GridFile g;
  long n = 0;
  in >> tok >> g.t;
  if (tok != "t") throw LatticeError("grid: expected t");
  in >> tok >> g.eps;
  if (tok != "eps") throw LatticeError("grid: expected eps");
  in >> tok >> g.dim;
  if (tok != "d") throw LatticeError("grid: expected d");
  in >> tok >> n;
  if (tok != "sites" || n < 0) throw LatticeError("grid: expected sites");
  g.values.resize(n);
  for (long i = 0; i < n; ++i) {
    long idx = -1;
    in >> idx >> g.values[i];
    if (idx != i) throw LatticeError("grid: bad site index");
  }
  if (!in) throw LatticeError("grid: truncated");
  return g;
}

GridFile read_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LatticeError("grid: cannot open " + path);
  return read_grid(in);
}

void write_events_ndjson(const std::vector<EventRecord>& evts, std::ostream& out) {
  for (const auto& e : evts) {
    out << "{\"t\":" << format17(e.t) << ",\"kind\":\""
        << (e.kind == EventRecord::Kind::move ? "move" : "annihilate_branch")
        << "\",\"species\":\"" << (e.species > 0 ? "+" : "-") << "\",\"from\":"
        << e.from << ",\"to\":" << e.to;
    if (e.kind == EventRecord::Kind::annihilate_branch)
      out << ",\"u\":" << e.branch_same << ",\"v\":" << e.branch_opp;
    out << "}\n";
  }
}

std::vector<EventRecord> read_events_ndjson(std::istream& in) {
  std::vector<EventRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    EventRecord e;
    e.t = j.at("t").get<double>();
    e.kind = j.at("kind").get<std::string>() == "move"
                 ? EventRecord::Kind::move
                 : EventRecord::Kind::annihilate_branch;
    e.species = j.at("species").get<std::string>() == "+" ? +1 : -1;
    e.from = j.at("from").get<std::int32_t>();
    e.to = j.at("to").get<std::int32_t>();
    if (e.kind == EventRecord::Kind::annihilate_branch) {
      e.branch_same = j.at("u").get<std::int32_t>();
      e.branch_opp = j.at("v").get<std::int32_t>();
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace abrw
