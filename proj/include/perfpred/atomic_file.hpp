#pragma once

#include <string>
#include <string_view>

namespace perfpred {

/// Writes `content` to `path` via a sibling temporary file and a rename, so
/// readers never observe a partially written file.
void write_file_atomic(const std::string& path, std::string_view content);

}  // namespace perfpred
