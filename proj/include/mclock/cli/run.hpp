#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "mclock/cli/csv.hpp"
#include "mclock/cli/runspec.hpp"
#include "mclock/liouville.hpp"
#include "mclock/model.hpp"
#include "mclock/observables.hpp"
#include "mclock/trajectory.hpp"

#ifndef MCLOCK_VERSION
#define MCLOCK_VERSION "0.0.0"
#endif

namespace mclock::cli {

namespace fs = std::filesystem;

struct RunOptions {
  int threads = 1;
};

struct RunResult {
  std::vector<std::string> files;  // relative to the output directory
  json summary;
};

enum ExitCode : int { kSuccess = 0, kConfigError = 2, kNumericalFailure = 3 };

namespace detail {

// Tracks what has been written so a failed run can be rolled back.
class OutputDir {
 public:
  explicit OutputDir(const std::string& dir) : root_(dir) {
    if (dir.empty()) throw ConfigError("output: missing required key (or pass --out)");
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw ConfigError("output: cannot create directory '" + dir + "': " + ec.message());
  }

  std::string path(const std::string& name) {
    written_.push_back(name);
    return (root_ / name).string();
  }

  const std::vector<std::string>& written() const { return written_; }

  void rollback() noexcept {
    std::error_code ec;
    for (const auto& f : written_) fs::remove(root_ / f, ec);
    written_.clear();
  }

 private:
  fs::path root_;
  std::vector<std::string> written_;
};

inline std::vector<std::string> density_header(const char* first, int n) {
  std::vector<std::string> h{first};
  for (int j = 0; j < n; ++j) h.push_back("rho_" + std::to_string(j));
  return h;
}

// Occupations may dip below zero by roundoff; clamp at output only.
inline std::string occupation(double p) {
  if (p < -1e-9) throw NumericalError("negative occupation " + format_number(p) + " in output");
  return format_number(p < 0.0 ? 0.0 : p);
}

inline void write_density_row(CsvWriter& w, double t, const RVector& p) {
  std::vector<std::string> row{format_number(t)};
  for (Eigen::Index j = 0; j < p.size(); ++j) row.push_back(occupation(p[j]));
  w.write_row(row);
}

inline void write_histogram(OutputDir& out, const std::string& name, const Histogram& h) {
  CsvWriter w(out.path(name), {"bin_center", "count"});
  for (std::size_t b = 0; b < h.centers.size(); ++b)
    w.write_row({format_number(h.centers[b]), format_number(h.counts[b])});
  w.close();
}

inline void write_trajectory(OutputDir& out, const TrajectoryRecord& r, bool densities) {
  const std::string stem = "trajectory_" + std::to_string(r.index);
  {
    CsvWriter w(out.path(stem + ".csv"), {"t", "J", "IPR", "phi", "jumps"});
    for (std::size_t s = 0; s < r.times.size(); ++s)
      w.write_row({format_number(r.times[s]), format_number(r.current[s]), format_number(r.ipr[s]),
                   format_number(r.angle[s]), format_number(r.jumps_per_sample[s])});
    w.close();
  }
  {
    CsvWriter w(out.path(stem + "_jumps.csv"), {"t", "site"});
    for (const auto& j : r.jumps) w.write_row({format_number(j.time), format_number(j.site + 1)});
    w.close();
  }
  if (!densities) return;
  if (!r.position_density.empty()) {
    std::vector<std::string> h{"t"};
    for (Eigen::Index b = 0; b < r.position_density.front().size(); ++b)
      h.push_back("site_" + std::to_string(b + 1));
    CsvWriter w(out.path(stem + "_position.csv"), h);
    for (std::size_t s = 0; s < r.times.size(); ++s) write_density_row(w, r.times[s], r.position_density[s]);
    w.close();
  }
  if (!r.momentum_density.empty()) {
    CsvWriter w(out.path(stem + "_momentum.csv"),
                density_header("t", static_cast<int>(r.momentum_density.front().size())));
    for (std::size_t s = 0; s < r.times.size(); ++s) write_density_row(w, r.times[s], r.momentum_density[s]);
    w.close();
  }
}

inline void write_summary(OutputDir& out, const std::string& name, const json& summary) {
  CsvWriter w(out.path(name), {"quantity", "value"});
  for (const auto& [key, value] : summary.items())
    w.write_row({key, value.is_number() ? format_number(value.get<double>()) : value.dump()});
  w.close();
}

inline RVector diagonal_of(const CMatrix& rho) { return rho.diagonal().real(); }

inline json run_evolve(const RunSpec& spec, const AmplitudeTable& table, OutputDir& out) {
  const auto& n = spec.numerics;
  const DensityMatrix rho0 = DensityMatrix::from_pure(spec.init->build(spec.model.n_sites));
  IntegrationOptions opt{*n.t_final, *n.dt, *n.sample_dt, IntegrationMethod::rk4, 1e-6};
  CsvWriter w(out.path("diagonals.csv"), density_header("t", spec.model.n_sites));
  double max_offdiag = 0.0;
  const auto diag = integrate(spec.model, table, rho0, opt, [&](const DensityMatrix& r) {
    write_density_row(w, r.time, diagonal_of(r.rho));
    CMatrix off = r.rho;
    off.diagonal().setZero();
    max_offdiag = std::max(max_offdiag, off.cwiseAbs().maxCoeff());
  });
  w.close();
  return {{"max_trace_drift", diag.max_trace_drift},
          {"max_hermiticity_defect", diag.max_hermiticity_defect},
          {"max_offdiagonal", max_offdiag}};
}

inline json run_diagonal_exact(const RunSpec& spec, const AmplitudeTable& table, OutputDir& out) {
  const auto& n = spec.numerics;
  const DensityMatrix rho0 = DensityMatrix::from_pure(spec.init->build(spec.model.n_sites));
  const auto series = solve_diagonal_exact(table, {diagonal_of(rho0.rho), 0.0},
                                           spec.model.rates.uniform_value(),
                                           sample_times(*n.t_final, *n.sample_dt));
  CsvWriter w(out.path("diagonals.csv"), density_header("t", spec.model.n_sites));
  for (const auto& p : series) write_density_row(w, p.time, p.p);
  w.close();
  return json::object();
}

inline json run_trajectories(const RunSpec& spec, const AmplitudeTable& table, OutputDir& out,
                             const RunOptions& ro) {
  const auto& n = spec.numerics;
  EnsembleOptions eo;
  eo.t_final = *n.t_final;
  eo.sample_dt = *n.sample_dt;
  eo.n_traj = *n.n_traj;
  eo.master_seed = *spec.master_seed;
  eo.threads = ro.threads;
  eo.keep_records = *n.record_trajectories;
  eo.keep_record_densities = true;
  const PureState psi0 = spec.init->build(spec.model.n_sites);
  const EnsembleResult res = run_ensemble(spec.model, table, psi0, eo);

  {
    CsvWriter w(out.path("ensemble_diagonals.csv"), density_header("t", spec.model.n_sites));
    for (std::size_t s = 0; s < res.times.size(); ++s)
      write_density_row(w, res.times[s], res.mean_momentum_density[s]);
    w.close();
  }
  const int hist_index = static_cast<int>(std::lround(*n.hist_time / *n.sample_dt));
  const RVector j_col = res.current.col(hist_index);
  const RVector ipr_col = res.ipr.col(hist_index);
  const std::vector<double> jv(j_col.data(), j_col.data() + j_col.size());
  const std::vector<double> iv(ipr_col.data(), ipr_col.data() + ipr_col.size());
  json summary = {{"hist_time", *n.hist_time}, {"n_traj", *n.n_traj}};
  const double mean_j = j_col.mean();
  summary["mean_J"] = mean_j;
  summary["mean_IPR"] = ipr_col.mean();
  if (jv.size() >= 2) {
    const double var = (j_col.array() - mean_j).square().sum() / (jv.size() - 1);
    summary["stderr_J"] = std::sqrt(var / jv.size());
    const Histogram hj = histogram(jv, *n.bins);
    const Histogram hi = histogram(iv, *n.bins);
    write_histogram(out, "hist_J.csv", hj);
    write_histogram(out, "hist_IPR.csv", hi);
    summary["J_dip_ratio"] = hj.bimodality.dip_ratio;
    summary["J_mean_left"] = hj.bimodality.mean_left;
    summary["J_mean_right"] = hj.bimodality.mean_right;
    summary["J_left_mode"] = hj.centers[hj.bimodality.left_mode];
    summary["J_right_mode"] = hj.centers[hj.bimodality.right_mode];
  }
  long total_jumps = 0;
  for (long c : res.jump_counts) total_jumps += c;
  summary["mean_jumps"] = static_cast<double>(total_jumps) / *n.n_traj;
  summary["max_weight_defect"] = res.max_weight_defect;
  for (const auto& r : res.records) write_trajectory(out, r, true);
  write_summary(out, "ensemble_summary.csv", summary);
  return summary;
}

inline json run_correlate(const RunSpec& spec, const AmplitudeTable& table, OutputDir& out,
                          const RunOptions& ro) {
  const auto& n = spec.numerics;
  const int site = *n.site - 1;
  const auto tau = sample_times(*n.tau_max, *n.sample_dt);
  const CorrelationSeries c = correlator_ss(spec.model, table, site, tau, *n.dt, ro.threads);
  CsvWriter w(out.path("correlator_a" + std::to_string(*n.site) + ".csv"), {"tau", "C_norm", "Im_C"});
  for (std::size_t s = 0; s < tau.size(); ++s)
    w.write_row({format_number(tau[s]), format_number(c.normalized[s]), format_number(c.imag[s])});
  w.close();
  json summary = {{"max_imag", c.max_imag}, {"imag_within_tolerance", c.imag_within_tolerance()}};
  if (tau.size() >= 8) {
    const double w_min = 2.0 * 2.0 * std::numbers::pi / *n.tau_max;
    summary["dominant_period"] = 2.0 * std::numbers::pi / dominant_frequency(c.normalized, *n.sample_dt, w_min);
  }
  return summary;
}

inline json run_spectrum(const RunSpec& spec, const AmplitudeTable& table, OutputDir& out) {
  const auto& n = spec.numerics;
  TrajectoryOptions topt{*n.t_final, *n.sample_dt, false, false};
  const PureState psi0 = spec.init->build(spec.model.n_sites);
  const TrajectoryRecord rec = run_trajectory(spec.model, table, psi0, topt, *spec.master_seed, 0);
  std::vector<double> kept_t, kept_phi, y;
  for (std::size_t s = 0; s < rec.times.size(); ++s)
    if (rec.times[s] >= *n.t_discard - 1e-12) {
      kept_t.push_back(rec.times[s]);
      kept_phi.push_back(rec.angle[s]);
      y.push_back(std::sin(rec.angle[s]));
    }
  const SpectrumSeries sp = power_spectral_density(y, *n.sample_dt, {*n.remove_mean, *n.welch_segments});
  {
    CsvWriter w(out.path("peak_signal.csv"), {"t", "phi", "y"});
    for (std::size_t s = 0; s < kept_t.size(); ++s)
      w.write_row({format_number(kept_t[s]), format_number(kept_phi[s]), format_number(y[s])});
    w.close();
  }
  {
    CsvWriter w(out.path("spectrum.csv"), {"omega", "S"});
    for (std::size_t m = 0; m < sp.omega.size(); ++m)
      w.write_row({format_number(sp.omega[m]), format_number(sp.power[m])});
    w.close();
  }
  write_trajectory(out, rec, false);
  const double peak = peak_frequency(sp);
  const double expected = 2.0 * std::numbers::pi * 2.0 * spec.model.t_hop / spec.model.n_sites;
  json summary = {{"peak_omega", peak}, {"group_velocity_omega", expected},
                  {"n_jumps", static_cast<double>(rec.jumps.size())}};
  write_summary(out, "spectrum_summary.csv", summary);
  return summary;
}

}  // namespace detail

/// Metadata written next to the data: the resolved spec plus derived constants.
inline json run_metadata(const RunSpec& spec, const AmplitudeTable& table) {
  const MomentumGrid grid(spec.model.n_sites);
  std::vector<int> ms;
  std::vector<double> ks;
  for (int j = 0; j < grid.size(); ++j) {
    ms.push_back(grid.m(j));
    ks.push_back(grid.k(j));
  }
  json meta;
  meta["spec"] = to_json(spec);
  meta["version"] = MCLOCK_VERSION;
  meta["derived"] = {{"clock_period_T", spec.model.clock_period()},
                     {"max_group_velocity", 2.0 * spec.model.t_hop},
                     {"momentum_grid_m", ms},
                     {"momentum_grid_k", ks},
                     {"amplitude_norm_N_h", table.norm_constant},
                     {"rule_dt", default_time_step(spec.model)}};
  meta["conventions"] = {
      {"units", "hbar = 1, lattice constant = 1; times in units of 1/t_hop when t_hop = 1"},
      {"basis", "<b|k> = exp(i k b)/sqrt(N), b = 0..N-1; density columns rho_j are in grid order, m = j - N/2"},
      {"sites", "1-based in files and configs"},
      {"peak_angle", "phi = 2 pi j*/N with j* the 0-based argmax of |psi_b|^2, smallest index on ties"},
      {"current", "J = sum_a Im(conj(psi_a) psi_{a+1}); |k> carries J = sin k"}};
  meta["warnings"] = table.warnings;
  return meta;
}

/// Executes one run. Throws ConfigError, ModelError or NumericalError; on failure every file
/// written by this call is removed.
inline RunResult run(const RunSpec& spec, const RunOptions& options = {}) {
  detail::OutputDir out(spec.output);
  try {
    const AmplitudeTable table = build_amplitude_table(spec.model);
    json summary;
    switch (spec.kind) {
      case Kind::evolve: summary = detail::run_evolve(spec, table, out); break;
      case Kind::diagonal_exact: summary = detail::run_diagonal_exact(spec, table, out); break;
      case Kind::trajectories: summary = detail::run_trajectories(spec, table, out, options); break;
      case Kind::correlate: summary = detail::run_correlate(spec, table, out, options); break;
      case Kind::spectrum: summary = detail::run_spectrum(spec, table, out); break;
    }
    json meta = run_metadata(spec, table);
    meta["summary"] = summary;
    std::vector<std::string> files = out.written();
    meta["files"] = files;
    std::ofstream m(out.path("metadata.json"), std::ios::binary);
    m << meta.dump(2) << '\n';
    m.close();
    if (!m) throw std::runtime_error("cannot write metadata.json");
    return {out.written(), summary};
  } catch (...) {
    out.rollback();
    throw;
  }
}

}  // namespace mclock::cli
