#pragma once

// Runs the command-line tool and compares artifact trees byte for byte.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>

namespace cli {

namespace fs = std::filesystem;

/// Exit status of `bibo <args>` with output discarded.
inline int run(const std::string& args) {
    const std::string cmd = std::string(BIBO_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Relative path -> contents for every file under `root`.
inline std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
    return out;
}

/// Empty when both trees hold the same files with identical bytes, else the first difference.
inline std::string compare_trees(const fs::path& a, const fs::path& b) {
    const auto x = snapshot(a), y = snapshot(b);
    if (x.empty()) return "no artifacts under " + a.string();
    for (const auto& [name, bytes] : x) {
        const auto it = y.find(name);
        if (it == y.end()) return name + " missing from second run";
        if (it->second != bytes) return name + " differs";
    }
    if (y.size() != x.size()) return "second run has extra files";
    return {};
}

/// Fresh scratch directory under the system temp dir.
inline fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("bibo_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

inline void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

} // namespace cli
