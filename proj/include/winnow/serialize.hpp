#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>

#include "winnow/gates.hpp"
#include "winnow/metrics.hpp"
#include "winnow/model.hpp"

namespace winnow {

// Canonical form used for every artifact: two-space indent, sorted keys
// (nlohmann objects iterate sorted), trailing newline. Reruns with the same
// inputs reproduce files byte for byte.
std::string canonical_dump(const nlohmann::json& value);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& value);
nlohmann::json read_json_file(const std::filesystem::path& path);

// FNV-1a hash of the compact dump, as 16 hex digits.
std::string json_hash(const nlohmann::json& value);

nlohmann::json mat_to_json(const Mat& m);
Mat mat_from_json(const nlohmann::json& value, const std::string& where);

nlohmann::json model_to_json(const ModelState& model);
ModelState model_from_json(const nlohmann::json& value);

nlohmann::json gates_to_json(const GateSet& gates);
GateSet gates_from_json(const nlohmann::json& value);

nlohmann::json report_to_json(const EvalReport& report);

inline constexpr int kFormatVersion = 1;

}  // namespace winnow
