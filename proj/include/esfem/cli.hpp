#pragma once

// Command-line entry point.  Subcommands:
//   mesh         write an evolved mesh file and print quality numbers
//   solve        run one (level, integrator, tau) solve from a JSON config
//   convergence  run a convergence study, write CSV + plot script + report
//   check        print integrator coefficients and stability diagnostics
//
// Exit codes: 0 ok, 1 I/O failure, 2 usage error, 3 numerical failure.

namespace esfem::cli {

int run(int argc, const char* const* argv);

} // namespace esfem::cli
