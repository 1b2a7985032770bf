#pragma once

#include <string>
#include <vector>

namespace cllab::cli {

struct RunResult {
    int exit_code = 0;                 // 0 all checks pass, 2 a check failed, 1 usage or parse error
    std::string report;                // JSON document (empty on usage errors)
    std::string csv;                   // plot data when the command produces it
    std::string message;               // usage text or error message
};

// argv[0] is the program name. Writes nothing; the caller decides where report and CSV go.
RunResult run(const std::vector<std::string>& argv);

// The report with the wall-clock field removed, for byte comparisons between runs.
std::string strip_timing(const std::string& report);

}  // namespace cllab::cli
