#pragma once

#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "avraeval/dataset.hpp"

namespace avraeval::prompts {

inline constexpr int kTemplateCount = 5;

struct PromptTemplate {
  int template_id = 0;
  std::string preamble;
  std::string body;
};

// One (record x template) unit of inference work.
struct PromptInstance {
  std::string instance_id;  // record_id + ":" + template_id
  std::string record_id;
  int template_id = 0;
  std::string system_text;       // context + separator + instruction
  std::string context_text;
  std::string instruction_text;  // preamble + "\n" + body

  bool operator==(const PromptInstance&) const = default;
};

class UnknownTemplate : public std::invalid_argument {
 public:
  explicit UnknownTemplate(int id) : std::invalid_argument("unknown template id " + std::to_string(id)) {}
};

class TemplateDrift : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PromptOptions {
  ContextFormat context;
  std::string separator = "\n\n";
};

// Renders the current player, every combatant in order, and the utterance
// history under labeled sections. Absent fields are omitted.
std::string build_context(const FireballRecord& record, const ContextFormat& format = {});

// The five shipped templates, ids 1..5, from the build-time embedded resources.
const std::vector<PromptTemplate>& builtin_templates();
const PromptTemplate& builtin_template(int template_id);

PromptInstance build_prompt(const FireballRecord& record, const PromptTemplate& tmpl,
                            const PromptOptions& options = {});

// Record-major, template-minor. With no ids given, all five templates.
std::vector<PromptInstance> expand(const std::vector<FireballRecord>& records,
                                   const std::set<int>& template_ids = {1, 2, 3, 4, 5},
                                   const PromptOptions& options = {});

// Splits "rec:3" into ("rec", 3). Returns false if there is no numeric suffix.
bool split_instance_id(std::string_view instance_id, std::string& record_id, int& template_id);

struct TemplateDigest {
  std::string file_name;
  std::string sha256;
};

// Digests pinned in resources/prompts/SHA256SUMS at build time.
std::vector<TemplateDigest> pinned_digests();
std::string pinned_digest(int template_id);

struct DigestMismatch {
  std::string file_name;
  std::string expected;
  std::string actual;  // empty when the file is missing
};

std::vector<DigestMismatch> verify_embedded_templates();
std::vector<DigestMismatch> verify_template_dir(const std::filesystem::path& dir);

// Loads templates from a resource directory; throws TemplateDrift if any
// file deviates from its pinned digest.
std::vector<PromptTemplate> load_templates(const std::filesystem::path& dir);

namespace detail {

struct EmbeddedResource {
  std::string_view file_name;
  std::string_view sha256;
  std::string_view bytes;
};

const std::vector<EmbeddedResource>& embedded_resources();

}  // namespace detail
}  // namespace avraeval::prompts
