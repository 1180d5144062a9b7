#pragma once

#include "scratch.hpp"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

namespace fsd::test {

struct CliResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr interleaved
};

inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

// Runs the fsd executable with a reproducible creation timestamp.
inline CliResult run_cli(const std::vector<std::string>& args, const std::filesystem::path& log) {
    std::string cmd = "SOURCE_DATE_EPOCH=0 " + shell_quote(FSD_CLI_PATH);
    for (const auto& a : args) cmd += " " + shell_quote(a);
    cmd += " > " + shell_quote(log.string()) + " 2>&1";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.output = read_text(log);
    return r;
}

// Value of `key=` in a line of `key=value` pairs, or NaN when absent.
inline double key_value(const std::string& text, const std::string& key) {
    const std::string needle = key + "=";
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        if (pos == 0 || text[pos - 1] == ' ' || text[pos - 1] == '\n') return std::strtod(text.c_str() + pos + needle.size(), nullptr);
        pos += needle.size();
    }
    return std::nan("");
}

}  // namespace fsd::test
