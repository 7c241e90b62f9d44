#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "avraeval/command.hpp"
#include "avraeval/expected.hpp"

namespace avraeval {

// `<CUR/MAX HP; STATUS>`. Values outside [0, max] occur in the wild and are
// kept as-is; `in_range()` reports them.
struct HpState {
  int current = 0;
  int max = 1;
  std::string status;

  bool in_range() const { return current >= 0 && current <= max; }
  bool operator==(const HpState&) const = default;
};

enum class HpParseError { HpShape };

Expected<HpState, HpParseError> parse_hp(std::string_view text);
std::string format_hp(const HpState& hp);

// Splits a comma-joined inventory string on ", ". Names that themselves
// contain a comma ("Crossbow, light") come back as two entries.
std::vector<std::string> split_inventory(std::string_view raw);

// A comma-joined inventory string and the entries derived from it.
struct Inventory {
  std::string raw;
  std::vector<std::string> entries;

  static Inventory from_raw(std::string raw);
  bool empty() const { return entries.empty(); }
  bool operator==(const Inventory&) const = default;
};

struct Actor {
  std::string name;
  std::optional<HpState> hp;
  std::optional<std::string> class_label;
  std::optional<std::string> race;
  Inventory attacks;
  Inventory spells;
  Inventory actions;
  Inventory effects;
  std::optional<std::string> description;

  bool operator==(const Actor&) const = default;
};

struct CombatState {
  std::vector<Actor> actors;

  bool operator==(const CombatState&) const = default;
};

enum class MatchTier { None, Exact, Prefix, Substring, RawSubstring };

std::string_view to_string(MatchTier tier);

// First tier (in order exact, prefix, substring, raw-substring) under which
// the normalized query matches. See text::normalize_name.
MatchTier match_tier(std::string_view query, const std::vector<std::string>& entries,
                     std::string_view raw);

bool name_match(std::string_view query, const std::vector<std::string>& entries,
                std::string_view raw);

enum class Verdict { Pass, AttackMismatch, SpellMismatch, TargetMismatch, NoCommand, UnknownVerb };

std::string_view to_string(Verdict verdict);
std::optional<Verdict> verdict_from_string(std::string_view name);

inline constexpr Verdict kAllVerdicts[] = {Verdict::Pass,           Verdict::AttackMismatch,
                                           Verdict::SpellMismatch,  Verdict::TargetMismatch,
                                           Verdict::NoCommand,      Verdict::UnknownVerb};

struct ReferenceOutcome {
  Verdict verdict = Verdict::NoCommand;
  std::string detail;

  bool passed() const { return verdict == Verdict::Pass; }
  bool operator==(const ReferenceOutcome&) const = default;
};

enum class CommandKind { Attack, Cast };

// Alias table: a/attack -> Attack, c/cast -> Cast. Case-insensitive.
std::optional<CommandKind> resolve_verb(std::string_view verb);

// True if `target` is `self` or names an actor in `state` (normalized,
// exact or prefix). Returns the first matching actor in combat order.
const Actor* resolve_target(std::string_view target, const Actor& current, const CombatState& state);

// Grounds a parsed command in the game state. Checks run verb, subject,
// targets; the first failure decides the verdict.
ReferenceOutcome reference_check(const std::optional<AvraeCommand>& cmd, const Actor& actor,
                                 const CombatState& state);

}  // namespace avraeval
