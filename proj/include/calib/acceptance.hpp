#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace calib {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
};

// Runs the full acceptance suite, printing one PASS/FAIL line per
// criterion to `out`. Returns the individual results.
std::vector<CriterionResult> run_acceptance(std::ostream& out);

}  // namespace calib
