#include <gtest/gtest.h>

#include <random>

#include "mclock/mclock.hpp"
#include "oracles.hpp"

using namespace mclock;

namespace {

ModelConfig ring(int n, double sigma, double gamma = 1.0, double t_hop = 1.0) {
  return {n, t_hop, sigma, Rates::uniform(gamma)};
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST(StreamRng, DeterministicAndDistinct) {
  StreamRng a(42, 3), b(42, 3), c(42, 4), d(43, 3);
  const double ua = a.uniform();
  EXPECT_EQ(ua, b.uniform());
  EXPECT_NE(ua, c.uniform());
  EXPECT_NE(ua, d.uniform());
}

TEST(StreamRng, ExponentialMean) {
  StreamRng r(1, 0);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) sum += r.exponential(2.0);
  // mean 0.5, standard error 0.5 / sqrt(n)
  EXPECT_NEAR(sum / n, 0.5, 5.0 * 0.5 / std::sqrt(double(n)));
}

TEST(NoJump, MomentumEigenstateOnlyPicksUpPhase) {
  const ModelConfig c = ring(10, 1.5);
  const AmplitudeTable t = build_amplitude_table(c);
  const PureState k = PureState::momentum_eigenstate(10, 2);
  const PureState out = step_no_jump(c, t, k, 0.73);
  EXPECT_NEAR(std::abs(out.amps[MomentumGrid(10).index_of_m(2)]), 1.0, 1e-15);
  EXPECT_NEAR(out.norm(), 1.0, 1e-14);
}

TEST(NoJump, MatchesUnitaryFromPositionHamiltonian) {
  const int n = 9;
  const ModelConfig c = ring(n, 1.5, 1.0, 0.6);
  const AmplitudeTable t = build_amplitude_table(c);
  std::mt19937_64 rng(4);
  const CVector x = oracle::random_state(n, rng);
  const PureState out = in_basis(step_no_jump(c, t, {x, Basis::position, 0.0}, 1.3), Basis::position);
  const CVector ref = (cplx(0, -1.3) * oracle::hamiltonian_position(n, 0.6)).exp() * x;
  EXPECT_LT((out.amps - ref).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NoJump, SurvivalProbabilityIsStateIndependent) {
  // ||exp(-i H_eff dt) psi||^2 with H_eff = H - i gamma/2 sum_a D_a^dagger D_a
  const int n = 8;
  const double gamma = 0.8;
  const AmplitudeTable t = build_amplitude_table(ring(n, 1.2, gamma));
  CMatrix heff = oracle::hamiltonian_momentum(n, 1.0);
  for (int a = 0; a < n; ++a) {
    const CMatrix d = oracle::lindblad_momentum(t.h, a);
    heff += cplx(0, -0.5 * gamma) * d.adjoint() * d;
  }
  std::mt19937_64 rng(2);
  for (double dt : {0.1, 0.7, 2.0}) {
    const CMatrix prop = (cplx(0, -dt) * heff).exp();
    for (int trial = 0; trial < 3; ++trial) {
      const CVector psi = oracle::random_state(n, rng);
      EXPECT_NEAR((prop * psi).squaredNorm(), std::exp(-gamma * dt), 1e-12);
    }
  }
}

TEST(Jump, PositionEigenstateWeightsAreProfileSquares) {
  const int n = 12;
  const ModelConfig c = ring(n, 2.0);
  const AmplitudeTable t = build_amplitude_table(c);
  TrajectorySimulator sim(c, t);
  const CVector b = PureState::position_eigenstate(n, 5).amps;
  const RVector w = sim.channel_weights(b);
  for (int a = 0; a < n; ++a) EXPECT_NEAR(w[a], t.h(a, 5) * t.h(a, 5), 1e-14);
  EXPECT_NEAR(w.sum(), 1.0, 1e-12);
}

TEST(Jump, ChannelWeightsMatchOperatorNorms) {
  const int n = 15;
  const ModelConfig c = ring(n, 2.0);
  const AmplitudeTable t = build_amplitude_table(c);
  TrajectorySimulator sim(c, t);
  std::mt19937_64 rng(8);
  const CVector x = oracle::random_state(n, rng);
  const RVector w = sim.channel_weights(x);
  for (int a = 0; a < n; ++a)
    EXPECT_NEAR(w[a], (t.h.row(a).transpose().cast<cplx>().cwiseProduct(x)).squaredNorm(), 1e-13);
}

TEST(Jump, PostJumpIprFromMomentumEigenstate) {
  const int n = 20;
  const ModelConfig c = ring(n, 2.0);
  const AmplitudeTable t = build_amplitude_table(c);
  StreamRng rng(9, 0);
  for (int m : {-10, -3, 0, 7}) {
    const auto [site, post] = sample_jump(c, t, PureState::momentum_eigenstate(n, m), rng);
    EXPECT_EQ(post.basis, Basis::position);
    EXPECT_NEAR(ipr(post), 1.0 / t.h4sum[site], 1e-12);
    EXPECT_NEAR(post.norm(), 1.0, 1e-12);
  }
}

TEST(Jump, SameSeedSameOutcome) {
  const ModelConfig c = ring(16, 2.0);
  const AmplitudeTable t = build_amplitude_table(c);
  std::mt19937_64 g(1);
  const PureState psi{oracle::random_state(16, g), Basis::momentum, 0.0};
  StreamRng r1(5, 1), r2(5, 1);
  const auto a = sample_jump(c, t, psi, r1);
  const auto b = sample_jump(c, t, psi, r2);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second.amps, b.second.amps);
}

TEST(Jump, ChannelFrequenciesFollowWeights) {
  const int n = 10;
  const ModelConfig c = ring(n, 1.5);
  const AmplitudeTable t = build_amplitude_table(c);
  TrajectorySimulator sim(c, t);
  std::mt19937_64 g(3);
  const PureState psi{oracle::random_state(n, g), Basis::position, 0.0};
  const RVector w = sim.channel_weights(psi.amps);
  StreamRng rng(77, 0);
  const int draws = 40000;
  std::vector<int> hits(n, 0);
  for (int i = 0; i < draws; ++i) hits[sim.sample_jump(psi, rng).first]++;
  for (int a = 0; a < n; ++a) {
    const double se = std::sqrt(w[a] * (1 - w[a]) / draws);
    EXPECT_NEAR(hits[a] / double(draws), w[a], 5 * se + 1e-12) << "a=" << a;
  }
}

TEST(Trajectory, NoMeasurementMeansNoJumps) {
  const int n = 12;
  const ModelConfig c = ring(n, 2.0, 0.0);
  const AmplitudeTable t = build_amplitude_table(c);
  std::mt19937_64 g(5);
  const PureState psi{oracle::random_state(n, g), Basis::momentum, 0.0};
  const TrajectoryRecord r = run_trajectory(c, t, psi, {10.0, 1.0, false, true}, 1);
  EXPECT_TRUE(r.jumps.empty());
  for (const auto& p : r.momentum_density) EXPECT_LT((p - psi.amps.cwiseAbs2()).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Trajectory, JumpCountIsPoisson) {
  const ModelConfig c = ring(20, 2.0, 1.0);
  const AmplitudeTable t = build_amplitude_table(c);
  const TrajectoryRecord r = run_trajectory(c, t, PureState::momentum_eigenstate(20, 0), {500.0, 50.0}, 2024);
  EXPECT_LT(std::abs(double(r.jumps.size()) - 500.0), 5.0 * std::sqrt(500.0));
  long per_sample = 0;
  for (int j : r.jumps_per_sample) per_sample += j;
  EXPECT_EQ(per_sample, long(r.jumps.size()));
}

TEST(Trajectory, NormAndWeightCompleteness) {
  const int n = 30;
  const ModelConfig c = ring(n, 3.0, 2.0, 1.0);
  const AmplitudeTable t = build_amplitude_table(c);
  const TrajectoryRecord r =
      run_trajectory(c, t, PureState::uniform_superposition(n), {100.0, 0.5, true, true}, 7);
  EXPECT_GT(r.jumps.size(), 100u);
  EXPECT_LT(r.max_weight_defect, 1e-10);
  for (std::size_t s = 0; s < r.times.size(); ++s) {
    EXPECT_NEAR(r.position_density[s].sum(), 1.0, 1e-10);
    EXPECT_NEAR(r.momentum_density[s].sum(), 1.0, 1e-10);
    EXPECT_LE(std::abs(r.current[s]), 1.0 + 1e-12);
    EXPECT_GE(r.ipr[s], 1.0 - 1e-12);
    EXPECT_LE(r.ipr[s], n + 1e-9);
  }
  EXPECT_NEAR(r.final_state.norm(), 1.0, 1e-10);
}

TEST(Trajectory, SameSeedIsBitIdentical) {
  const ModelConfig c = ring(24, 2.4, 1.0, 1.0);
  const AmplitudeTable t = build_amplitude_table(c);
  const TrajectoryOptions o{50.0, 0.5, true, false};
  const TrajectoryRecord a = run_trajectory(c, t, PureState::momentum_eigenstate(24, 0), o, 99, 3);
  const TrajectoryRecord b = run_trajectory(c, t, PureState::momentum_eigenstate(24, 0), o, 99, 3);
  ASSERT_EQ(a.jumps.size(), b.jumps.size());
  for (std::size_t i = 0; i < a.jumps.size(); ++i) {
    EXPECT_EQ(a.jumps[i].time, b.jumps[i].time);
    EXPECT_EQ(a.jumps[i].site, b.jumps[i].site);
  }
  EXPECT_EQ(a.current, b.current);
  EXPECT_EQ(a.angle, b.angle);
}

TEST(Trajectory, MeasurementLocalizes) {
  const int n = 100;
  const ModelConfig c = ring(n, 10.0, 1.0, 1.0);
  const AmplitudeTable t = build_amplitude_table(c);
  const TrajectoryRecord r =
      run_trajectory(c, t, PureState::momentum_eigenstate(n, 0), {200.0, 1.0}, 11);
  double late = 0.0;
  int count = 0;
  for (std::size_t s = 0; s < r.times.size(); ++s)
    if (r.times[s] >= 100.0) late += r.ipr[s], ++count;
  EXPECT_LT(late / count, n / 2.0);
}

TEST(Ensemble, LateMomentumMassNearHalfBandEdges) {
  // At steady state the ensemble momentum distribution is flat, so the mass within pi/4 of
  // +-pi/2 averages to exactly one half.
  const int n = 100;
  const ModelConfig c = ring(n, 10.0, 1.0, 1.0);
  const AmplitudeTable t = build_amplitude_table(c);
  const EnsembleOptions o{3000.0, 3000.0, 200, 17, 1, 0, false};
  const EnsembleResult r = run_ensemble(c, t, PureState::momentum_eigenstate(n, 0), o);
  const MomentumGrid g(n);
  double mass = 0.0;
  for (int j = 0; j < n; ++j)
    if (std::abs(std::abs(g.k(j)) - std::numbers::pi / 2) < std::numbers::pi / 4)
      mass += r.mean_momentum_density.back()[j];
  // single-trajectory mass lies in [0, 1]; its standard deviation is at most 1/2
  EXPECT_NEAR(mass, 0.5, 3 * 0.5 / std::sqrt(200.0));
}

TEST(Ensemble, ThreadCountDoesNotChangeOutput) {
  const ModelConfig c = ring(16, 2.0, 1.0, 1.0);
  const AmplitudeTable t = build_amplitude_table(c);
  EnsembleOptions o{20.0, 1.0, 150, 5, 1, 3, true};
  const EnsembleResult a = run_ensemble(c, t, PureState::momentum_eigenstate(16, 0), o);
  o.threads = 4;
  const EnsembleResult b = run_ensemble(c, t, PureState::momentum_eigenstate(16, 0), o);
  EXPECT_EQ(a.current, b.current);
  EXPECT_EQ(a.ipr, b.ipr);
  EXPECT_EQ(a.jump_counts, b.jump_counts);
  for (std::size_t s = 0; s < a.times.size(); ++s) EXPECT_EQ(a.mean_momentum_density[s], b.mean_momentum_density[s]);
  ASSERT_EQ(a.records.size(), 3u);
  EXPECT_EQ(a.records[2].angle, b.records[2].angle);
}

TEST(Ensemble, StreamsAreUncorrelated) {
  const ModelConfig c = ring(10, 1.5, 1.0, 1.0);
  const AmplitudeTable t = build_amplitude_table(c);
  const EnsembleResult r =
      run_ensemble(c, t, PureState::momentum_eigenstate(10, 0), {50.0, 50.0, 800, 123, 1, 0, false});
  std::vector<double> even, odd;
  for (int i = 0; i < 800; i += 2) {
    even.push_back(double(r.jump_counts[i]));
    odd.push_back(double(r.jump_counts[i + 1]));
  }
  // correlation of 400 independent pairs has standard error ~ 1/sqrt(400)
  EXPECT_LT(std::abs(pearson(even, odd)), 4.0 / std::sqrt(400.0));
}

TEST(Ensemble, MatchesMasterEquationOnSmallRing) {
  const int n = 8;
  const ModelConfig c = ring(n, 1.0, 1.0, 1.0);
  const AmplitudeTable t = build_amplitude_table(c);
  const PureState psi0 = PureState::momentum_eigenstate(n, 0);
  const int n_traj = 1000;
  const EnsembleResult e = run_ensemble(c, t, psi0, {5.0, 0.5, n_traj, 8, 1, 0, false});
  const DensitySeries m = integrate(c, t, DensityMatrix::from_pure(psi0), {5.0, 0.01, 0.5});
  double worst = 0.0;
  for (std::size_t s = 0; s < e.times.size(); ++s)
    worst = std::max(worst, (e.mean_momentum_density[s] - m.samples[s].rho.diagonal().real()).cwiseAbs().maxCoeff());
  EXPECT_LT(worst, 3.0 / std::sqrt(double(n_traj)));
}

TEST(Ensemble, RejectsEmptyEnsemble) {
  const ModelConfig c = ring(8, 1.0);
  const AmplitudeTable t = build_amplitude_table(c);
  EXPECT_THROW(run_ensemble(c, t, PureState::momentum_eigenstate(8, 0), {1.0, 1.0, 0, 1}), ConfigError);
}

TEST(Trajectory, PerSiteRatesRejected) {
  ModelConfig c = ring(4, 1.0);
  c.rates = Rates::per_site({1, 2, 1, 1});
  const AmplitudeTable t = build_amplitude_table(c);
  EXPECT_THROW(TrajectorySimulator(c, t), ConfigError);
}
