#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "avraeval/errors.hpp"
#include "avraeval/expected.hpp"
#include "avraeval/game_state.hpp"

namespace avraeval {

class SchemaError : public std::runtime_error {
 public:
  enum class Kind { NoName };

  SchemaError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct Utterance {
  std::string speaker;
  std::string text;

  // "Player 2: go ahead" -> {"Player 2", "go ahead"}; no label -> empty speaker.
  static Utterance from_line(std::string_view line);
  std::string line() const;
  bool operator==(const Utterance&) const = default;
};

struct FireballRecord {
  std::string record_id;
  Actor current_actor;
  CombatState combat_state;
  std::vector<Utterance> utterance_history;
  std::string gold_command;

  bool operator==(const FireballRecord&) const = default;
};

enum class DropReason { MissingField, OverLength, MalformedJson };

std::string_view to_string(DropReason reason);

struct DroppedRow {
  std::string record_id;
  DropReason reason;
};

struct RecordWarning {
  std::string record_id;
  std::string message;
};

struct FilterReport {
  std::size_t total = 0;
  std::size_t kept = 0;
  std::vector<DroppedRow> dropped;
  std::vector<RecordWarning> warnings;
};

nlohmann::json to_json(const FilterReport& report);

// Labels of the merged game-state context handed to the model.
struct ContextFormat {
  std::string current_header = "Current Player:";
  std::string others_header = "Other Combatants:";
  std::string history_header = "Utterance History:";
};

struct DatasetOptions {
  // Rows whose merged context is longer than this many characters are dropped.
  std::size_t max_context_chars = 4001;
  std::set<std::string> scrub_fields = {"controller_id", "description"};
  ContextFormat context;
};

// Maps one FIREBALL actor object onto an Actor, dropping scrubbed fields.
// Throws SchemaError when there is no usable name.
Actor scrub_actor(const nlohmann::json& raw, const DatasetOptions& options = {});

// Builds a record from one parsed input row, or says why it is dropped.
Expected<FireballRecord, DropReason> filter_record(const nlohmann::json& row, std::string record_id,
                                                   const DatasetOptions& options = {});

struct LoadResult {
  std::vector<FireballRecord> records;
  FilterReport report;
};

// Reads one JSON object per line, plain or gzip-compressed. Malformed lines
// are recorded, never fatal. Throws IoError if the file cannot be read.
LoadResult load_records(const std::filesystem::path& path, const DatasetOptions& options = {});

// Normalized records in the FIREBALL shape plus a `record_id` field.
nlohmann::json to_json(const Actor& actor);
nlohmann::json to_json(const FireballRecord& record);
void write_records(std::ostream& out, const std::vector<FireballRecord>& records);

}  // namespace avraeval
