#include "avraeval/dataset.hpp"

#include <zlib.h>

#include <unordered_set>

#include "avraeval/prompts.hpp"
#include "avraeval/text.hpp"

namespace avraeval {
namespace {

using nlohmann::json;

constexpr std::string_view kFields[] = {"current_actor", "combat_state_before", "utterance_history",
                                        "commands_norm"};

bool is_empty_value(const json& value) {
  if (value.is_null()) return true;
  if (value.is_string()) return text::trim(value.get_ref<const std::string&>()).empty();
  if (value.is_array() || value.is_object()) return value.empty();
  return false;
}

std::optional<std::string> optional_string(const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) return std::nullopt;
  const auto& s = it->get_ref<const std::string&>();
  if (text::trim(s).empty()) return std::nullopt;
  return s;
}

Inventory inventory_field(const json& obj, const char* key) {
  return Inventory::from_raw(optional_string(obj, key).value_or(""));
}

std::optional<std::string> gold_command(const json& value) {
  if (value.is_string()) {
    const std::string_view s = text::trim(value.get_ref<const std::string&>());
    if (!s.empty()) return std::string(s);
    return std::nullopt;
  }
  if (value.is_array()) {
    for (const auto& item : value) {
      if (auto s = gold_command(item)) return s;
    }
  }
  return std::nullopt;
}

std::optional<Utterance> utterance_from_json(const json& item) {
  if (item.is_string()) return Utterance::from_line(item.get_ref<const std::string&>());
  if (item.is_object()) {
    const auto text = item.find("text");
    if (text == item.end() || !text->is_string()) return std::nullopt;
    Utterance u;
    u.text = text->get<std::string>();
    if (const auto speaker = item.find("speaker"); speaker != item.end() && speaker->is_string()) {
      u.speaker = speaker->get<std::string>();
    }
    return u;
  }
  return std::nullopt;
}

json nullable(const std::optional<std::string>& value) { return value ? json(*value) : json(nullptr); }

// Line reader over zlib's transparent gz stream (plain files pass through).
class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) {
      throw IoError("cannot read input file: " + path.string());
    }
    file_ = gzopen(path.c_str(), "rb");
    if (file_ == nullptr) throw IoError("cannot open input file: " + path.string());
  }
  ~LineReader() {
    if (file_ != nullptr) gzclose(file_);
  }
  LineReader(const LineReader&) = delete;
  LineReader& operator=(const LineReader&) = delete;

  bool next(std::string& line) {
    line.clear();
    char buf[8192];
    while (gzgets(file_, buf, sizeof(buf)) != nullptr) {
      line.append(buf);
      if (!line.empty() && line.back() == '\n') {
        line.pop_back();
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
      }
    }
    int errnum = 0;
    gzerror(file_, &errnum);
    if (errnum != Z_OK && errnum != Z_STREAM_END) throw IoError("read error in input file");
    return !line.empty();
  }

 private:
  gzFile file_ = nullptr;
};

}  // namespace

Utterance Utterance::from_line(std::string_view line) {
  const std::size_t colon = line.find(": ");
  if (colon == std::string_view::npos || colon == 0 || colon > 64 ||
      line.substr(0, colon).find('\n') != std::string_view::npos) {
    return {"", std::string(line)};
  }
  return {std::string(line.substr(0, colon)), std::string(line.substr(colon + 2))};
}

std::string Utterance::line() const { return speaker.empty() ? text : speaker + ": " + text; }

std::string_view to_string(DropReason reason) {
  switch (reason) {
    case DropReason::MissingField:
      return "missing_field";
    case DropReason::OverLength:
      return "over_length";
    case DropReason::MalformedJson:
      return "malformed_json";
  }
  return "malformed_json";
}

json to_json(const FilterReport& report) {
  json dropped = json::array();
  for (const auto& d : report.dropped) {
    dropped.push_back({{"record_id", d.record_id}, {"reason", to_string(d.reason)}});
  }
  json warnings = json::array();
  for (const auto& w : report.warnings) {
    warnings.push_back({{"record_id", w.record_id}, {"message", w.message}});
  }
  return {{"total", report.total}, {"kept", report.kept}, {"dropped", dropped}, {"warnings", warnings}};
}

Actor scrub_actor(const json& raw, const DatasetOptions& options) {
  if (!raw.is_object()) throw SchemaError(SchemaError::Kind::NoName, "actor is not an object");
  const auto name = optional_string(raw, "name");
  if (!name) throw SchemaError(SchemaError::Kind::NoName, "actor has no name");

  auto keep = [&](const char* key) { return options.scrub_fields.count(key) == 0; };

  Actor actor;
  actor.name = *name;
  if (keep("hp")) {
    if (const auto hp = optional_string(raw, "hp")) {
      if (auto parsed = parse_hp(*hp)) actor.hp = *parsed;
    }
  }
  if (keep("class")) actor.class_label = optional_string(raw, "class");
  if (keep("race")) actor.race = optional_string(raw, "race");
  if (keep("attacks")) actor.attacks = inventory_field(raw, "attacks");
  if (keep("spells")) actor.spells = inventory_field(raw, "spells");
  if (keep("actions")) actor.actions = inventory_field(raw, "actions");
  if (keep("effects")) actor.effects = inventory_field(raw, "effects");
  if (keep("description")) actor.description = optional_string(raw, "description");
  return actor;
}

Expected<FireballRecord, DropReason> filter_record(const json& row, std::string record_id,
                                                   const DatasetOptions& options) {
  if (!row.is_object()) return Unexpected{DropReason::MalformedJson};
  for (std::string_view field : kFields) {
    const auto it = row.find(field);
    if (it == row.end() || is_empty_value(*it)) return Unexpected{DropReason::MissingField};
  }

  const json& actor = row.at("current_actor");
  const json& combat = row.at("combat_state_before");
  const json& history = row.at("utterance_history");
  if (!actor.is_object() || !combat.is_array() || !history.is_array()) {
    return Unexpected{DropReason::MissingField};
  }

  FireballRecord record;
  record.record_id = std::move(record_id);
  const auto gold = gold_command(row.at("commands_norm"));
  if (!gold) return Unexpected{DropReason::MissingField};
  record.gold_command = *gold;

  try {
    record.current_actor = scrub_actor(actor, options);
    for (const auto& a : combat) record.combat_state.actors.push_back(scrub_actor(a, options));
  } catch (const SchemaError&) {
    return Unexpected{DropReason::MissingField};
  }
  for (const auto& item : history) {
    auto u = utterance_from_json(item);
    if (!u) return Unexpected{DropReason::MissingField};
    record.utterance_history.push_back(std::move(*u));
  }

  const std::string context = prompts::build_context(record, options.context);
  if (text::utf8_length(context) > options.max_context_chars) return Unexpected{DropReason::OverLength};
  return record;
}

LoadResult load_records(const std::filesystem::path& path, const DatasetOptions& options) {
  LoadResult result;
  LineReader reader(path);
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;

  while (reader.next(line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    ++result.report.total;

    std::string record_id = std::to_string(line_no);
    json row = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (row.is_discarded() || !row.is_object()) {
      result.report.dropped.push_back({record_id, DropReason::MalformedJson});
      continue;
    }
    if (const auto it = row.find("record_id"); it != row.end() && it->is_string() && !it->empty()) {
      record_id = it->get<std::string>();
    }
    if (!seen_ids.insert(record_id).second) {
      result.report.warnings.push_back({record_id, "duplicate record_id, renamed with line number"});
      record_id += "#" + std::to_string(line_no);
      seen_ids.insert(record_id);
    }

    auto filtered = filter_record(row, record_id, options);
    if (!filtered) {
      result.report.dropped.push_back({record_id, filtered.error()});
      continue;
    }
    FireballRecord record = std::move(filtered).value();

    bool present = false;
    for (const auto& a : record.combat_state.actors) present = present || a.name == record.current_actor.name;
    if (!present) {
      result.report.warnings.push_back({record_id, "current actor '" + record.current_actor.name +
                                                       "' not in combat_state_before"});
    }
    auto check_hp = [&](const Actor& a) {
      if (a.hp && !a.hp->in_range()) {
        result.report.warnings.push_back({record_id, "hp out of range for " + a.name + ": " + format_hp(*a.hp)});
      }
    };
    check_hp(record.current_actor);

    ++result.report.kept;
    result.records.push_back(std::move(record));
  }
  return result;
}

json to_json(const Actor& actor) {
  json out = {{"name", actor.name},
              {"hp", actor.hp ? json(format_hp(*actor.hp)) : json(nullptr)},
              {"class", nullable(actor.class_label)},
              {"race", nullable(actor.race)},
              {"attacks", actor.attacks.raw},
              {"spells", actor.spells.raw},
              {"actions", actor.actions.raw},
              {"effects", actor.effects.raw}};
  if (actor.description) out["description"] = *actor.description;
  return out;
}

json to_json(const FireballRecord& record) {
  json combat = json::array();
  for (const auto& a : record.combat_state.actors) combat.push_back(to_json(a));
  json history = json::array();
  for (const auto& u : record.utterance_history) history.push_back(u.line());
  return {{"record_id", record.record_id},
          {"current_actor", to_json(record.current_actor)},
          {"combat_state_before", combat},
          {"utterance_history", history},
          {"commands_norm", json::array({record.gold_command})}};
}

void write_records(std::ostream& out, const std::vector<FireballRecord>& records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

}  // namespace avraeval
