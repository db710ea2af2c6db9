#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace qfces::jsonl {

using nlohmann::json;

// Calls `fn(record, line_number)` for each non-blank line. Throws ValidationError
// naming the line when a line is not valid JSON, or when the file is missing.
void for_each(const std::filesystem::path& path,
              const std::function<void(const json&, std::size_t)>& fn);

std::vector<json> read_all(const std::filesystem::path& path);

// Writes one compact record per line, keys in sorted order (nlohmann default).
void write_all(const std::filesystem::path& path, const std::vector<json>& records);
void append(const std::filesystem::path& path, const json& record);

void write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

}  // namespace qfces::jsonl
