#include "avraeval/prompts.hpp"

#include <fstream>
#include <sstream>

#include "avraeval/digest.hpp"

namespace avraeval::prompts {
namespace {

constexpr std::string_view kPreambleFile = "preamble.txt";

std::string template_file(int id) { return "prompt" + std::to_string(id) + ".txt"; }

void render_actor(std::ostringstream& out, const Actor& actor) {
  auto line = [&](std::string_view label, std::string_view value) {
    if (!value.empty()) out << label << ": " << value << '\n';
  };
  line("name", actor.name);
  if (actor.hp) line("hp", format_hp(*actor.hp));
  if (actor.class_label) line("class", *actor.class_label);
  if (actor.race) line("race", *actor.race);
  line("attacks", actor.attacks.raw);
  line("spells", actor.spells.raw);
  line("actions", actor.actions.raw);
  line("effects", actor.effects.raw);
  if (actor.description) line("description", *actor.description);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string_view embedded_bytes(std::string_view file_name) {
  for (const auto& r : detail::embedded_resources()) {
    if (r.file_name == file_name) return r.bytes;
  }
  throw TemplateDrift("no embedded resource " + std::string(file_name));
}

}  // namespace

std::string build_context(const FireballRecord& record, const ContextFormat& format) {
  std::ostringstream out;
  out << format.current_header << '\n';
  render_actor(out, record.current_actor);
  out << '\n' << format.others_header << '\n';
  for (std::size_t i = 0; i < record.combat_state.actors.size(); ++i) {
    if (i > 0) out << '\n';
    render_actor(out, record.combat_state.actors[i]);
  }
  out << '\n' << format.history_header;
  for (const auto& u : record.utterance_history) out << '\n' << u.line();
  return out.str();
}

const std::vector<PromptTemplate>& builtin_templates() {
  static const std::vector<PromptTemplate> templates = [] {
    std::vector<PromptTemplate> out;
    const std::string preamble(embedded_bytes(kPreambleFile));
    for (int id = 1; id <= kTemplateCount; ++id) {
      out.push_back({id, preamble, std::string(embedded_bytes(template_file(id)))});
    }
    return out;
  }();
  return templates;
}

const PromptTemplate& builtin_template(int template_id) {
  if (template_id < 1 || template_id > kTemplateCount) throw UnknownTemplate(template_id);
  return builtin_templates()[static_cast<std::size_t>(template_id - 1)];
}

PromptInstance build_prompt(const FireballRecord& record, const PromptTemplate& tmpl,
                            const PromptOptions& options) {
  if (tmpl.template_id < 1 || tmpl.template_id > kTemplateCount) throw UnknownTemplate(tmpl.template_id);
  PromptInstance inst;
  inst.record_id = record.record_id;
  inst.template_id = tmpl.template_id;
  inst.instance_id = record.record_id + ":" + std::to_string(tmpl.template_id);
  inst.context_text = build_context(record, options.context);
  inst.instruction_text = tmpl.preamble + "\n" + tmpl.body;
  inst.system_text = inst.context_text + options.separator + inst.instruction_text;
  return inst;
}

std::vector<PromptInstance> expand(const std::vector<FireballRecord>& records,
                                   const std::set<int>& template_ids, const PromptOptions& options) {
  std::vector<const PromptTemplate*> selected;
  for (int id : template_ids) selected.push_back(&builtin_template(id));

  std::vector<PromptInstance> out;
  out.reserve(records.size() * selected.size());
  for (const auto& record : records) {
    for (const auto* tmpl : selected) out.push_back(build_prompt(record, *tmpl, options));
  }
  return out;
}

bool split_instance_id(std::string_view instance_id, std::string& record_id, int& template_id) {
  const std::size_t colon = instance_id.rfind(':');
  if (colon == std::string_view::npos || colon + 1 >= instance_id.size()) return false;
  int id = 0;
  for (char c : instance_id.substr(colon + 1)) {
    if (c < '0' || c > '9' || id > 1000) return false;
    id = id * 10 + (c - '0');
  }
  record_id = std::string(instance_id.substr(0, colon));
  template_id = id;
  return true;
}

std::vector<TemplateDigest> pinned_digests() {
  std::vector<TemplateDigest> out;
  for (const auto& r : detail::embedded_resources()) {
    out.push_back({std::string(r.file_name), std::string(r.sha256)});
  }
  return out;
}

std::string pinned_digest(int template_id) {
  const std::string name = template_file(template_id);
  for (const auto& r : detail::embedded_resources()) {
    if (r.file_name == name) return std::string(r.sha256);
  }
  throw UnknownTemplate(template_id);
}

std::vector<DigestMismatch> verify_embedded_templates() {
  std::vector<DigestMismatch> out;
  for (const auto& r : detail::embedded_resources()) {
    const std::string actual = sha256_hex(r.bytes);
    if (actual != r.sha256) out.push_back({std::string(r.file_name), std::string(r.sha256), actual});
  }
  return out;
}

std::vector<DigestMismatch> verify_template_dir(const std::filesystem::path& dir) {
  std::vector<DigestMismatch> out;
  for (const auto& r : detail::embedded_resources()) {
    const auto path = dir / r.file_name;
    std::error_code ec;
    std::string actual = std::filesystem::is_regular_file(path, ec) ? sha256_file(path) : "";
    if (actual != r.sha256) out.push_back({std::string(r.file_name), std::string(r.sha256), actual});
  }
  return out;
}

std::vector<PromptTemplate> load_templates(const std::filesystem::path& dir) {
  const auto mismatches = verify_template_dir(dir);
  if (!mismatches.empty()) {
    std::string msg = "template drift in " + dir.string() + ":";
    for (const auto& m : mismatches) msg += " " + m.file_name;
    throw TemplateDrift(msg);
  }
  std::vector<PromptTemplate> out;
  const std::string preamble = read_file(dir / kPreambleFile);
  for (int id = 1; id <= kTemplateCount; ++id) {
    out.push_back({id, preamble, read_file(dir / template_file(id))});
  }
  return out;
}

}  // namespace avraeval::prompts
