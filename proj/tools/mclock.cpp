// mclock: master-equation, quantum-trajectory and spectral runs for a measured lattice ring.
//
//   mclock <evolve|diagonal-exact|trajectories|correlate|spectrum>
//          --config run.json [--out DIR] [--seed U64] [--threads N] [--override key=value]...

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mclock/cli/run.hpp"
#include "mclock/cli/runspec.hpp"

namespace {

struct Args {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  int threads = 1;
  std::vector<std::string> overrides;
};

int execute(mclock::cli::Kind kind, const Args& args, bool seed_given) {
  using namespace mclock;
  using namespace mclock::cli;
  try {
    std::ifstream in(args.config);
    if (!in) throw ConfigError("--config: cannot read '" + args.config + "'");
    std::stringstream text;
    text << in.rdbuf();

    json root = json::parse(text.str(), nullptr, false, true);
    if (root.is_discarded()) throw ConfigError("config: not valid JSON");
    if (root.contains("kind") && root["kind"] != to_string(kind))
      throw ConfigError("kind: config says '" + root["kind"].dump() + "' but subcommand is '" +
                        to_string(kind) + "'");
    root["kind"] = to_string(kind);
    apply_overrides(root, args.overrides);
    if (seed_given) root["master_seed"] = args.seed;
    if (!args.out.empty()) root["output"] = args.out;
    const RunSpec spec = resolve_runspec(root);

    const RunResult res = run(spec, {args.threads});
    for (const auto& w : build_amplitude_table(spec.model).warnings) std::cerr << "warning: " << w << '\n';
    std::cout << "wrote " << res.files.size() << " files to " << spec.output << '\n';
    if (!res.summary.empty()) std::cout << res.summary.dump(2) << '\n';
    return kSuccess;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumericalFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  using mclock::cli::Kind;
  CLI::App app{"Measured lattice ring simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", MCLOCK_VERSION);

  Args args;
  std::vector<std::pair<CLI::App*, Kind>> subs;
  const std::vector<std::pair<Kind, std::string>> kinds = {
      {Kind::evolve, "RK4 integration of the master equation; writes diagonals.csv"},
      {Kind::diagonal_exact, "closed-form diagonal-sector solution; writes diagonals.csv"},
      {Kind::trajectories, "quantum-jump ensemble; writes histograms and sample trajectories"},
      {Kind::correlate, "steady-state two-time correlator of D_a; writes correlator_a<j>.csv"},
      {Kind::spectrum, "peak-angle power spectral density of one trajectory; writes spectrum.csv"}};
  CLI::Option* seed_opt = nullptr;
  std::vector<CLI::Option*> seed_opts;
  for (const auto& [kind, help] : kinds) {
    CLI::App* sub = app.add_subcommand(mclock::cli::to_string(kind), help);
    sub->add_option("--config", args.config, "run description (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", args.out, "output directory (overrides 'output')");
    seed_opts.push_back(sub->add_option("--seed", args.seed, "master seed (overrides 'master_seed')"));
    sub->add_option("--threads", args.threads, "worker threads; output does not depend on it")
        ->check(CLI::PositiveNumber);
    sub->add_option("--override", args.overrides, "dotted.key=value, may repeat");
    subs.emplace_back(sub, kind);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mclock::cli::kConfigError;
  }

  for (std::size_t i = 0; i < subs.size(); ++i)
    if (subs[i].first->parsed()) {
      seed_opt = seed_opts[i];
      return execute(subs[i].second, args, seed_opt->count() > 0);
    }
  return mclock::cli::kConfigError;
}
