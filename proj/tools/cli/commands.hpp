#pragma once

#include "config.hpp"

#include <string>
#include <vector>

namespace pathmorse::cli {

inline const std::vector<std::string> kCommands{"geodesics", "index", "flow", "complex", "homology", "table", "verify"};

struct OutputFile {
    std::string name;  // <command>-<hash>.<ext>
    std::string content;
};

struct Report {
    std::vector<OutputFile> files;
    std::string text;  // human-readable summary for stdout
    int status = 0;    // 0, or 3 when a verified property failed
};

struct RunOptions {
    int workers = 0;  // 0 = available cores
};

/// Runs one command. Library errors propagate as pathmorse::Error; report bytes depend only
/// on the command and the effective config.
Report run_command(const RunConfig& cfg, const std::string& command, const RunOptions& opts = {});

/// Cell text used by `table`: "Z", "Z^r", torsion "Z_d", joined with "+"; "0" for the
/// trivial group; a truncated nonzero degree reads "+Z(trunc)".
std::string table_cell(int free_rank, const std::vector<std::string>& torsion, bool truncated);

}  // namespace pathmorse::cli
