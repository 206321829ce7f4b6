#pragma once

#include <iosfwd>

namespace cfbeam {

// Invariant suite run by the `selftest` command. Prints one line per check and
// returns true when all pass.
bool run_selftest(std::ostream& log);

}  // namespace cfbeam
