#include "qfces/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "qfces/error.hpp"
#include "qfces/text.hpp"

namespace qfces::jsonl {

void for_each(const std::filesystem::path& path,
              const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": malformed record: " + e.what());
    }
    fn(record, lineno);
  }
}

std::vector<json> read_all(const std::filesystem::path& path) {
  std::vector<json> out;
  for_each(path, [&](const json& j, std::size_t) { out.push_back(j); });
  return out;
}

void write_all(const std::filesystem::path& path, const std::vector<json>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
}

void append(const std::filesystem::path& path, const json& record) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  out << record.dump() << '\n';
  out.flush();
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write file: " + path.string());
  out << content;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace qfces::jsonl
