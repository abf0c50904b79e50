#pragma once

#include <CLI11.hpp>

namespace mmf::cli {

/// Adds every subcommand to `app`. Each subcommand runs from its callback.
void register_commands(CLI::App& app);

}  // namespace mmf::cli
