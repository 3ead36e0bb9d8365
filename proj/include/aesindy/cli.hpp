#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "aesindy/trainer.hpp"

namespace aesindy {

/// Runs one `aesd` subcommand. `args` excludes the program name.
/// Exit codes: 0 success, 1 usage, 2 data/validation, 3 numerical failure.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

/// Identified latent system, one line per equation, zeros omitted.
std::string format_equations(const LatentModel& model, int digits = 4);

/// Applies AESD_LOG (error, info, debug) to the global logger.
void configure_logging();

}  // namespace aesindy
