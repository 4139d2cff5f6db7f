#include <iostream>

#include <CLI11.hpp>

#include "hj/cli.hpp"

int main(int argc, char** argv) {
  hj::cli::Request request;
  CLI::App app{"Numerical checks for Hamilton-Jacobi problems"};
  app.set_version_flag("--version", "hjkit 1.0.0");
  std::string verb_help = "one of:";
  for (const auto& v : hj::cli::verbs()) verb_help += " " + v;
  app.add_option("verb", request.verb, verb_help)->required()->check(CLI::IsMember(hj::cli::verbs()));
  app.add_option("config", request.config, "TOML configuration file")->required();
  app.add_option("--out", request.out, "directory for report.json, timing.json and CSV files");
  app.add_option("--tolerance", request.tolerance, "override the primary tolerance of the checks")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", request.seed, "seed for random sampling");
  app.add_option("--samples", request.samples, "use this many random samples instead of the grid")
      ->check(CLI::PositiveNumber);
  app.add_flag("--quiet", request.quiet, "print nothing on success");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return hj::cli::kExitConfigError;
  }

  const hj::cli::Outcome outcome = hj::cli::run(request);
  return outcome.exit_code;
}
