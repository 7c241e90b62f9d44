#include "avraeval/game_state.hpp"

#include <charconv>

#include "avraeval/text.hpp"

namespace avraeval {
namespace {

bool parse_int(std::string_view s, int& out) {
  s = text::trim(s);
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

}  // namespace

Expected<HpState, HpParseError> parse_hp(std::string_view input) {
  std::string_view s = text::trim(input);
  if (s.size() < 2 || s.front() != '<' || s.back() != '>') return Unexpected{HpParseError::HpShape};
  s = s.substr(1, s.size() - 2);

  const std::size_t slash = s.find('/');
  const std::size_t hp = s.find(" HP");
  if (slash == std::string_view::npos || hp == std::string_view::npos || hp < slash) {
    return Unexpected{HpParseError::HpShape};
  }
  HpState out;
  if (!parse_int(s.substr(0, slash), out.current) ||
      !parse_int(s.substr(slash + 1, hp - slash - 1), out.max)) {
    return Unexpected{HpParseError::HpShape};
  }
  if (out.max < 1) return Unexpected{HpParseError::HpShape};

  std::string_view tail = s.substr(hp + 3);
  if (!tail.empty()) {
    if (tail.front() != ';') return Unexpected{HpParseError::HpShape};
    tail.remove_prefix(1);
  }
  out.status = std::string(text::trim(tail));
  return out;
}

std::string format_hp(const HpState& hp) {
  std::string out = "<" + std::to_string(hp.current) + "/" + std::to_string(hp.max) + " HP";
  if (!hp.status.empty()) out += "; " + hp.status;
  return out + ">";
}

std::vector<std::string> split_inventory(std::string_view raw) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    std::size_t next = raw.find(", ", pos);
    if (next == std::string_view::npos) next = raw.size();
    const std::string_view piece = text::trim(raw.substr(pos, next - pos));
    if (!piece.empty()) out.emplace_back(piece);
    pos = next + 2;
  }
  return out;
}

Inventory Inventory::from_raw(std::string raw) {
  Inventory inv;
  inv.entries = split_inventory(raw);
  inv.raw = std::move(raw);
  return inv;
}

std::string_view to_string(MatchTier tier) {
  switch (tier) {
    case MatchTier::None:
      return "none";
    case MatchTier::Exact:
      return "exact";
    case MatchTier::Prefix:
      return "prefix";
    case MatchTier::Substring:
      return "substring";
    case MatchTier::RawSubstring:
      return "raw_substring";
  }
  return "none";
}

MatchTier match_tier(std::string_view query, const std::vector<std::string>& entries,
                     std::string_view raw) {
  const std::string q = text::normalize_name(query);
  if (q.empty()) return MatchTier::None;

  std::vector<std::string> normalized;
  normalized.reserve(entries.size());
  for (const auto& e : entries) normalized.push_back(text::normalize_name(e));

  for (const auto& e : normalized) {
    if (e == q) return MatchTier::Exact;
  }
  for (const auto& e : normalized) {
    if (text::starts_with(e, q)) return MatchTier::Prefix;
  }
  for (const auto& e : normalized) {
    if (e.find(q) != std::string::npos) return MatchTier::Substring;
  }
  if (text::normalize_name(raw).find(q) != std::string::npos) return MatchTier::RawSubstring;
  return MatchTier::None;
}

bool name_match(std::string_view query, const std::vector<std::string>& entries,
                std::string_view raw) {
  return match_tier(query, entries, raw) != MatchTier::None;
}

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::Pass:
      return "pass";
    case Verdict::AttackMismatch:
      return "attack_mismatch";
    case Verdict::SpellMismatch:
      return "spell_mismatch";
    case Verdict::TargetMismatch:
      return "target_mismatch";
    case Verdict::NoCommand:
      return "no_command";
    case Verdict::UnknownVerb:
      return "unknown_verb";
  }
  return "no_command";
}

std::optional<Verdict> verdict_from_string(std::string_view name) {
  for (Verdict v : kAllVerdicts) {
    if (to_string(v) == name) return v;
  }
  return std::nullopt;
}

std::optional<CommandKind> resolve_verb(std::string_view verb) {
  const std::string v = text::to_lower(verb);
  if (v == "a" || v == "attack") return CommandKind::Attack;
  if (v == "c" || v == "cast") return CommandKind::Cast;
  return std::nullopt;
}

const Actor* resolve_target(std::string_view target, const Actor& current, const CombatState& state) {
  const std::string t = text::normalize_name(target);
  if (t.empty()) return nullptr;
  if (t == "self") return &current;
  for (const auto& actor : state.actors) {
    if (text::normalize_name(actor.name) == t) return &actor;
  }
  for (const auto& actor : state.actors) {
    if (text::starts_with(text::normalize_name(actor.name), t)) return &actor;
  }
  return nullptr;
}

ReferenceOutcome reference_check(const std::optional<AvraeCommand>& cmd, const Actor& actor,
                                 const CombatState& state) {
  if (!cmd) return {Verdict::NoCommand, "no command was generated"};

  const auto kind = resolve_verb(cmd->verb);
  if (!kind) return {Verdict::UnknownVerb, "verb '" + cmd->verb + "' is not attack or cast"};

  if (*kind == CommandKind::Attack) {
    const MatchTier attack = match_tier(cmd->subject, actor.attacks.entries, actor.attacks.raw);
    if (attack == MatchTier::None &&
        match_tier(cmd->subject, actor.actions.entries, actor.actions.raw) == MatchTier::None) {
      return {Verdict::AttackMismatch,
              "attack '" + cmd->subject + "' not in attacks or actions of " + actor.name};
    }
  } else if (match_tier(cmd->subject, actor.spells.entries, actor.spells.raw) == MatchTier::None) {
    return {Verdict::SpellMismatch, "spell '" + cmd->subject + "' not in spells of " + actor.name};
  }

  for (const auto& target : cmd->targets) {
    if (resolve_target(target, actor, state) == nullptr) {
      return {Verdict::TargetMismatch, "target '" + target + "' not found in combat state"};
    }
  }
  return {Verdict::Pass, ""};
}

}  // namespace avraeval
