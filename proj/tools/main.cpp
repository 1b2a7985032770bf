#include <fstream>
#include <iostream>

#include "runner.hpp"

namespace {

bool write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    return static_cast<bool>(out);
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    auto r = cllab::cli::run(args);
    if (!r.message.empty()) (r.exit_code == 1 ? std::cerr : std::cout) << r.message << "\n";
    if (r.report.empty()) return r.exit_code;

    std::string out, csv;
    for (std::size_t i = 1; i + 1 < args.size(); ++i) {
        if (args[i] == "--out") out = args[i + 1];
        if (args[i] == "--csv") csv = args[i + 1];
    }
    if (out.empty()) {
        std::cout << r.report;
    } else if (!write_file(out, r.report)) {
        std::cerr << "error: cannot write " << out << "\n";
        return 1;
    }
    if (!csv.empty() && !write_file(csv, r.csv)) {
        std::cerr << "error: cannot write " << csv << "\n";
        return 1;
    }
    return r.exit_code;
}
