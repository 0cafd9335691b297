#pragma once

namespace grrhdr {

// Full CLI dispatch. Returns the process exit code:
// 0 success, 2 parameter errors, 3 file/format errors, 4 convergence
// failures, 1 anything unexpected.
int run_cli(int argc, const char* const* argv);

}  // namespace grrhdr
