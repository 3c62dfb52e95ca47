#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mclock/core.hpp"
#include "mclock/fourier.hpp"
#include "mclock/liouville.hpp"
#include "mclock/model.hpp"
#include "mclock/observables.hpp"

namespace mclock {

/// Random stream for one trajectory.
///
/// The engine is std::mt19937_64 seeded with splitmix64(master ^ splitmix64(index)); variates
/// are built from raw 64-bit outputs (53-bit uniforms, inverse-CDF exponentials) so the
/// sequence is identical across standard libraries.
class StreamRng {
 public:
  StreamRng(std::uint64_t master_seed, std::uint64_t index) : engine_(stream_seed(master_seed, index)) {}

  static std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t stream_seed(std::uint64_t master_seed, std::uint64_t index) {
    return splitmix64(master_seed ^ splitmix64(index));
  }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

 private:
  std::mt19937_64 engine_;
};

struct JumpEvent {
  double time = 0.0;
  int site = 0;  // 0-based
};

struct TrajectoryOptions {
  double t_final = 0.0;
  double sample_dt = 0.0;
  bool keep_position_density = false;
  bool keep_momentum_density = false;
};

struct TrajectoryRecord {
  std::uint64_t master_seed = 0;
  std::uint64_t index = 0;
  std::vector<JumpEvent> jumps;
  std::vector<double> times;
  std::vector<double> current;
  std::vector<double> ipr;
  std::vector<double> angle;
  std::vector<int> jumps_per_sample;  // jumps in (t_{s-1}, t_s]
  std::vector<RVector> position_density;
  std::vector<RVector> momentum_density;
  double max_weight_defect = 0.0;     // max |sum_a ||D_a psi||^2 - 1| over jumps
  PureState final_state;
};

/// Quantum-jump unraveling for uniform rates.
///
/// Because sum_a D_a^2 = 1, the no-jump evolution is unitary up to the global factor
/// exp(-gamma t / 2): waiting times are exactly Exponential(gamma) and the normalised state
/// between jumps follows exp(-i H t). Channel a is picked with probability ||D_a psi||^2.
class TrajectorySimulator {
 public:
  TrajectorySimulator(const ModelConfig& config, const AmplitudeTable& table)
      : config_(config),
        table_(&table),
        gamma_(config.rates.uniform_value()),
        energies_(band_energies(config)),
        xf_(config.n_sites),
        weights_(RVector(table.h.row(0).transpose().array().square().matrix())) {
    config.validate();
    if (table.n_sites != config.n_sites) throw ConfigError("amplitude table does not match N");
  }

  int size() const { return config_.n_sites; }
  BasisTransform& transform() { return xf_; }

  /// Normalised no-jump evolution over dt; returned in the momentum basis.
  PureState step_no_jump(const PureState& psi, double dt) {
    PureState out = in_basis(psi, Basis::momentum, xf_);
    advance(out, dt);
    return out;
  }

  /// ||D_a psi||^2 for every a, from a circular correlation of h_0^2 with |psi_b|^2.
  RVector channel_weights(const CVector& position_amps) {
    const CVector density = position_amps.cwiseAbs2().cast<cplx>();
    const CVector w = weights_.apply(density);
    return w.real().cwiseMax(0.0);
  }

  /// Draws a channel and returns it with the normalised post-jump state (position basis).
  std::pair<int, PureState> sample_jump(const PureState& psi, StreamRng& rng) {
    double defect = 0.0;
    return sample_jump(psi, rng, defect);
  }

  std::pair<int, PureState> sample_jump(const PureState& psi, StreamRng& rng, double& weight_defect) {
    PureState pos = in_basis(psi, Basis::position, xf_);
    const RVector w = channel_weights(pos.amps);
    const double total = w.sum();
    weight_defect = std::abs(total - pos.amps.squaredNorm());
    if (!(total > 0.0)) throw NumericalError("all jump weights vanish");
    if (weight_defect > 1e-8) throw NumericalError("jump weights do not sum to the state norm");
    const double u = rng.uniform() * total;
    double cum = 0.0;
    int site = size() - 1;
    for (int a = 0; a < size(); ++a) {
      cum += w[a];
      if (u < cum) {
        site = a;
        break;
      }
    }
    while (w[site] <= 0.0 && site > 0) --site;
    pos.amps = pos.amps.cwiseProduct(table_->h.row(site).transpose().cast<cplx>());
    pos.normalize();
    return {site, pos};
  }

  TrajectoryRecord run(const PureState& psi0, const TrajectoryOptions& options, StreamRng& rng) {
    if (psi0.size() != size()) throw ConfigError("initial state size does not match N");
    const std::vector<double> times = sample_times(options.t_final, options.sample_dt);
    TrajectoryRecord rec;
    PureState psi = in_basis(psi0, Basis::momentum, xf_);
    psi.normalize();
    psi.time = 0.0;

    const double inf = std::numeric_limits<double>::infinity();
    double next_jump = gamma_ > 0.0 ? rng.exponential(gamma_) : inf;
    int jumps_here = 0;
    for (double ts : times) {
      while (next_jump <= ts) {
        advance(psi, next_jump - psi.time);
        psi.time = next_jump;
        double defect = 0.0;
        auto [site, pos] = sample_jump(psi, rng, defect);
        rec.max_weight_defect = std::max(rec.max_weight_defect, defect);
        psi.amps = xf_.to_momentum(pos.amps);
        rec.jumps.push_back({next_jump, site});
        ++jumps_here;
        next_jump += rng.exponential(gamma_);
      }
      advance(psi, ts - psi.time);
      psi.time = ts;
      record_sample(psi, options, rec);
      rec.jumps_per_sample.push_back(jumps_here);
      jumps_here = 0;
    }
    rec.final_state = psi;
    return rec;
  }

 private:
  void advance(PureState& psi, double dt) {
    if (dt == 0.0) return;
    for (int j = 0; j < size(); ++j) psi.amps[j] *= std::polar(1.0, -energies_[j] * dt);
    psi.time += dt;
  }

  void record_sample(const PureState& psi, const TrajectoryOptions& options, TrajectoryRecord& rec) {
    const CVector pos = xf_.to_position(psi.amps);
    const RVector density = pos.cwiseAbs2();
    const int n = size();
    double j = 0.0;
    for (int a = 0; a < n; ++a) j += (std::conj(pos[a]) * pos[(a + 1) % n]).imag();
    rec.times.push_back(psi.time);
    rec.current.push_back(j);
    rec.ipr.push_back(ipr_of_density(density));
    rec.angle.push_back(peak_angle(density));
    if (options.keep_position_density) rec.position_density.push_back(density);
    if (options.keep_momentum_density) rec.momentum_density.push_back(psi.amps.cwiseAbs2());
  }

  ModelConfig config_;
  const AmplitudeTable* table_;
  double gamma_;
  RVector energies_;
  BasisTransform xf_;
  CircularConvolution weights_;
};

inline PureState step_no_jump(const ModelConfig& config, const AmplitudeTable& table,
                              const PureState& psi, double dt) {
  return TrajectorySimulator(config, table).step_no_jump(psi, dt);
}

inline std::pair<int, PureState> sample_jump(const ModelConfig& config, const AmplitudeTable& table,
                                             const PureState& psi, StreamRng& rng) {
  return TrajectorySimulator(config, table).sample_jump(psi, rng);
}

inline TrajectoryRecord run_trajectory(const ModelConfig& config, const AmplitudeTable& table,
                                       const PureState& psi0, const TrajectoryOptions& options,
                                       std::uint64_t master_seed, std::uint64_t index = 0) {
  TrajectorySimulator sim(config, table);
  StreamRng rng(master_seed, index);
  TrajectoryRecord rec = sim.run(psi0, options, rng);
  rec.master_seed = master_seed;
  rec.index = index;
  return rec;
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

struct EnsembleOptions {
  double t_final = 0.0;
  double sample_dt = 0.0;
  int n_traj = 1;
  std::uint64_t master_seed = 0;
  int threads = 1;
  int keep_records = 0;          // first trajectories returned in full
  bool keep_record_densities = false;
};

struct EnsembleResult {
  std::vector<double> times;
  std::vector<RVector> mean_momentum_density;  // per sample time
  RMatrix current;                             // n_traj x n_samples
  RMatrix ipr;
  std::vector<long> jump_counts;
  double max_weight_defect = 0.0;
  std::vector<TrajectoryRecord> records;
};

/// n_traj independent trajectories, stream i keyed by (master_seed, i). Work is done in
/// blocks; within a block trajectories run on a worker pool and are then merged in index
/// order, so every output is independent of the thread count.
inline EnsembleResult run_ensemble(const ModelConfig& config, const AmplitudeTable& table,
                                   const PureState& psi0, const EnsembleOptions& options) {
  if (options.n_traj < 1) throw ConfigError("n_traj must be >= 1");
  config.validate();
  const int n = config.n_sites;
  EnsembleResult res;
  res.times = sample_times(options.t_final, options.sample_dt);
  const int n_samples = static_cast<int>(res.times.size());
  res.mean_momentum_density.assign(n_samples, RVector::Zero(n));
  res.current.resize(options.n_traj, n_samples);
  res.ipr.resize(options.n_traj, n_samples);
  res.jump_counts.assign(options.n_traj, 0);

  const int threads = std::max(1, options.threads);
  const int block = std::max(64, 4 * threads);
  std::vector<TrajectoryRecord> slots;
  for (int start = 0; start < options.n_traj; start += block) {
    const int count = std::min(block, options.n_traj - start);
    slots.assign(count, TrajectoryRecord{});
    std::atomic<int> next{0};
    auto worker = [&] {
      TrajectorySimulator sim(config, table);
      for (int i = next++; i < count; i = next++) {
        const int index = start + i;
        TrajectoryOptions topt{options.t_final, options.sample_dt, false, true};
        topt.keep_position_density = options.keep_record_densities && index < options.keep_records;
        StreamRng rng(options.master_seed, static_cast<std::uint64_t>(index));
        slots[i] = sim.run(psi0, topt, rng);
        slots[i].master_seed = options.master_seed;
        slots[i].index = static_cast<std::uint64_t>(index);
      }
    };
    if (threads == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < std::min(threads, count); ++w) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
    for (int i = 0; i < count; ++i) {
      TrajectoryRecord& r = slots[i];
      const int index = start + i;
      for (int s = 0; s < n_samples; ++s) {
        res.mean_momentum_density[s] += r.momentum_density[s];
        res.current(index, s) = r.current[s];
        res.ipr(index, s) = r.ipr[s];
      }
      res.jump_counts[index] = static_cast<long>(r.jumps.size());
      res.max_weight_defect = std::max(res.max_weight_defect, r.max_weight_defect);
      if (index < options.keep_records) {
        if (!options.keep_record_densities) r.momentum_density.clear();
        res.records.push_back(std::move(r));
      }
    }
  }
  for (auto& m : res.mean_momentum_density) m /= static_cast<double>(options.n_traj);
  return res;
}

}  // namespace mclock
