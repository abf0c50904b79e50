#include <cstdio>
#include <exception>

#include "commands.hpp"
#include "mmf/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"MatMul-free language model toolkit"};
  app.set_config("--config-file", "", "TOML/INI file with default flag values");
  app.require_subcommand(1);
  mmf::cli::register_commands(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
