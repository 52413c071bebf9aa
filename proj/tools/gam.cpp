// gam <steady|bode|simulate|compare> --spec FILE|PRESET [options]

#include <iostream>

#include "CLI11.hpp"
#include "gam/run.hpp"

namespace {

void shared_options(CLI::App& sub, gam::RunConfig& config) {
  sub.add_option("--spec", config.spec, "spec file or preset name")->required();
  sub.add_option("--order", config.order, "truncation order N");
  sub.add_option("--out", config.out, "output directory");
  sub.add_option("--residual-tol", config.settings.residual_tol, "waveform constraint tolerance");
  sub.add_option("--coefficient-tol", config.settings.coefficient_tol,
                 "relative equilibrium tolerance");
  sub.add_option("--max-iterations", config.settings.max_iterations,
                 "operating-point iteration budget");
  sub.add_option("--seed", config.seed, "recorded in the metadata; the pipeline is deterministic");
}

void sweep_options(CLI::App& sub, gam::RunConfig& config) {
  sub.add_option("--fmin", config.fmin, "lowest frequency, Hz (default fs/1000)");
  sub.add_option("--fmax", config.fmax, "highest frequency, Hz (default 2 fs)");
  sub.add_option("--points", config.points, "log-spaced grid points (default 20 per decade)");
  sub.add_option("--sideband", config.sideband, "output sideband m");
  sub.add_option("--input", config.input, "control (default from the spec file)");
  sub.add_option("--output", config.output, "output or state (default from the spec file)");
  sub.add_option("--threads", config.threads, "worker threads, 0 = all cores");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Harmonic (moving Fourier coefficient) models of switched converters"};
  app.require_subcommand(1);
  gam::RunConfig config;

  auto* steady = app.add_subcommand("steady", "operating point and waveforms");
  shared_options(*steady, config);
  steady->add_option("--samples", config.waveform_points, "waveform samples per period");

  auto* bode = app.add_subcommand("bode", "frequency response of the harmonic model");
  shared_options(*bode, config);
  sweep_options(*bode, config);

  auto* simulate = app.add_subcommand("simulate", "time-domain trace of the switched circuit");
  shared_options(*simulate, config);
  simulate->add_option("--periods", config.periods, "simulated switching periods");
  simulate->add_option("--input", config.input, "modulated control");
  simulate->add_option("--depth", config.depth, "modulation depth");
  simulate->add_option("--fmod", config.modulation_frequency, "modulation frequency, Hz");

  auto* compare = app.add_subcommand("compare", "harmonic model vs baseline vs simulation");
  shared_options(*compare, config);
  sweep_options(*compare, config);
  compare->add_option("--depth", config.depth, "oracle modulation depth");
  compare->add_option("--detect-tol", config.detect_tol, "oracle steady-state tolerance");
  compare->add_option("--max-periods", config.max_periods, "oracle steady-state budget");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(gam::ErrorCategory::validation);
  }

  for (auto* sub : app.get_subcommands()) config.command = gam::command_from_string(sub->get_name());
  const auto result = gam::run(config, std::cout, std::cerr);
  for (const auto& path : result.artifacts) std::cout << "wrote " << path.string() << '\n';
  return result.exit_code;
}
