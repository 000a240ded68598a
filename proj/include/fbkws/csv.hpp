#pragma once

#include <string>
#include <vector>

namespace fbkws::csv {

// Minimal CSV: comma-separated, newline rows, no quoting (no field written by
// this project ever contains a comma or newline).
std::vector<std::vector<std::string>> read(const std::string& path);

std::string join_row(const std::vector<std::string>& fields);

// Writes via temp file + rename so readers never observe a partial file.
void write_atomic(const std::string& path, const std::string& content);

// %.9g: enough digits for float32 values to round-trip exactly.
std::string fmt_float(double v);

}  // namespace fbkws::csv
