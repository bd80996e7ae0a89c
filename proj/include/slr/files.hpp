#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace slr::files {

/// Whole-file read; missing file raises file_not_found.
std::string read(const std::filesystem::path& path);

/// Write to a sibling temp file, flush, then rename over `path`. Readers see
/// either the old content or the new content, never a prefix.
void write_atomic(const std::filesystem::path& path, std::string_view content);

/// Append one line (a trailing newline is added) and flush.
void append_line(const std::filesystem::path& path, std::string_view line);

}  // namespace slr::files
