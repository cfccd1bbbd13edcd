#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace indistill::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigFailure = 2,
  kDataFailure = 3,
  kNumericFailure = 4,
};

// Entry point shared by the executable and the tests. args excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Version string written into ledger rows.
std::string version_string();

}  // namespace indistill::cli
