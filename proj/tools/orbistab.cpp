#include <CLI11.hpp>

#include "orbistab/cli.hpp"

int main(int argc, char** argv) {
  using namespace orbistab::cli;
  CLI::App app{"Orbital stabilization of underactuated mechanical systems"};
  app.set_version_flag("--version", std::string(orbistab::io::kToolVersion));
  app.require_subcommand(1);

  Options opts;
  std::string config, out;
  std::uint64_t seed = 0;

  auto add = [&](const char* name, const char* help, int (*fn)(const Options&)) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "run configuration (JSON)")->required();
    sub->add_option("--out", out, "output directory")->required();
    sub->add_option("--seed", seed, "override the simulation noise seed");
    sub->add_flag("--quiet", opts.quiet, "suppress progress output");
    sub->callback([&, sub, fn] {
      opts.config = config;
      opts.out = out;
      if (sub->count("--seed") > 0) opts.seed = seed;
      throw CLI::RuntimeError(fn(opts));
    });
  };
  add("plan", "plan the orbit and its velocity profile", cmd_plan);
  add("linearize", "build the transverse linearization", cmd_linearize);
  add("riccati", "solve for the periodic gain schedule", cmd_riccati);
  add("simulate", "simulate the closed loop", cmd_simulate);
  add("verify", "check the certificate and report", cmd_verify);

  try {
    app.parse(argc, argv);
  } catch (const CLI::RuntimeError& e) {
    return e.get_exit_code();
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return 0;
}
