#ifndef AUTOMR_DATASET_HPP
#define AUTOMR_DATASET_HPP

#include "automr/strategy_catalog.hpp"

#include <json.hpp>

#include <fstream>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

namespace automr {

struct DatasetRecord {
  std::string query;
  std::string answer;
  TaskKind task = TaskKind::generic;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One JSON object per line: {"query", "answer", optional "task"}. Blank
/// lines are skipped; line numbers in errors are 1-based.
inline std::vector<DatasetRecord> parse_dataset(std::istream& in) {
  std::vector<DatasetRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& ex) {
      throw DatasetError(where + "invalid JSON (" + ex.what() + ")");
    }
    if (!doc.is_object()) throw DatasetError(where + "expected a JSON object");
    DatasetRecord rec;
    for (const char* field : {"query", "answer"}) {
      if (!doc.contains(field)) throw DatasetError(where + "missing field " + field);
      if (!doc[field].is_string()) throw DatasetError(where + "field " + field + " must be a string");
      if (doc[field].get_ref<const std::string&>().empty()) throw DatasetError(where + "field " + field + " is empty");
    }
    rec.query = doc["query"].get<std::string>();
    rec.answer = doc["answer"].get<std::string>();
    if (doc.contains("task")) {
      if (!doc["task"].is_string()) throw DatasetError(where + "field task must be a string");
      try {
        rec.task = parse_task_kind(doc["task"].get<std::string>());
      } catch (const std::invalid_argument& ex) {
        throw DatasetError(where + "field task: " + ex.what());
      }
    }
    out.push_back(std::move(rec));
  }
  if (out.empty()) throw DatasetError("dataset is empty");
  return out;
}

inline std::vector<DatasetRecord> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset " + path);
  try {
    return parse_dataset(in);
  } catch (const DatasetError& ex) {
    throw DatasetError(path + ": " + ex.what());
  }
}

}  // namespace automr

#endif  // AUTOMR_DATASET_HPP
