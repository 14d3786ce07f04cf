#pragma once

#include <string>
#include <vector>

namespace remixsep {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Quick invariant suite covering every module; used by `remixsep selftest`.
std::vector<CheckResult> run_selfchecks();

}  // namespace remixsep
