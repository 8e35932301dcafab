#pragma once

#include <string>

namespace url::io {

// Writes `content` to `path` atomically: a temp file in the same directory is
// written, flushed, then renamed over the target. An interrupted run can
// therefore never leave a truncated artifact at `path`.
void write_file_atomic(const std::string& path, const std::string& content);

// Whole-file read; DataError when the file is missing/unreadable.
std::string read_file(const std::string& path);

bool file_exists(const std::string& path);

}  // namespace url::io
