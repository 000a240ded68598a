#include "fbkws/csv.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fbkws/error.hpp"

namespace fbkws::csv {

std::vector<std::vector<std::string>> read(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), Error::Kind::kData, "cannot open csv file: " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    rows.push_back(std::move(fields));
  }
  return rows;
}

std::string join_row(const std::vector<std::string>& fields) {
  std::string out;
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += fields[i];
  }
  out += '\n';
  return out;
}

void write_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    require(f.good(), Error::Kind::kData, "cannot open temp file for: " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    f.flush();
    require(f.good(), Error::Kind::kData, "short write to temp file for: " + path);
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  require(!ec, Error::Kind::kData, "atomic rename failed for: " + path + " (" + ec.message() + ")");
}

std::string fmt_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace fbkws::csv
