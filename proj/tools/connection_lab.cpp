// connection-lab: run one experiment from a JSON config.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "connlab/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Wu-Yang copy experiments on polynomial and grid connections"};
  app.footer(connlab::kSchemaHelp);

  std::string experiment;
  std::string config_path;
  std::optional<std::string> output;
  std::optional<std::uint64_t> seed;
  std::optional<double> tolerance;

  std::string names;
  for (const auto& n : connlab::experiment_names()) names += (names.empty() ? "" : ", ") + n;
  app.add_option("experiment", experiment, "one of: " + names)->required();
  app.add_option("--config", config_path, "JSON config file")->required();
  app.add_option("--output", output, "output directory (overrides output_dir)");
  app.add_option("--seed", seed, "random seed (overrides seed)");
  app.add_option("--tolerance", tolerance, "assertion tolerance (overrides tolerance)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::string text;
  try {
    text = connlab::read_text(config_path);
  } catch (const connlab::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }

  connlab::ExperimentConfig cfg;
  try {
    cfg = connlab::parse_config(text, experiment, {output, seed, tolerance});
    connlab::thread_cap();
  } catch (const connlab::SchemaError& e) {
    std::cerr << config_path << ":" << e.line() << ":" << e.column() << ": schema error: " << e.what() << "\n";
    return 2;
  } catch (const connlab::ConfigurationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  return connlab::run(cfg);
}
