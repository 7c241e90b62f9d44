#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "avraeval/expected.hpp"

namespace avraeval {

// One non-target argument after the subject: a flag, a bare value, or a
// flag followed by its value (`-rr 2`).
struct ArgToken {
  std::optional<std::string> flag;
  std::optional<std::string> value;

  bool operator==(const ArgToken&) const = default;
};

// Parsed Avrae bot command, e.g. `!attack longbow -t WY1 adv`.
struct AvraeCommand {
  std::string verb;
  std::string subject;
  std::vector<std::string> targets;
  std::vector<ArgToken> extra_args;
  // Text the command was parsed from. Not part of structural equality.
  std::string raw;

  // Compares the AST only; `raw` is ignored.
  bool operator==(const AvraeCommand& other) const {
    return verb == other.verb && subject == other.subject && targets == other.targets &&
           extra_args == other.extra_args;
  }
};

enum class ParseError { NoBang, EmptyVerb, DanglingFlag };

std::string_view to_string(ParseError err);

// Tolerant single-line parser.
//
// The verb is the first token minus its `!`. The subject is every token up
// to the first unquoted `-`-prefixed token, joined by single spaces. Each
// `-t` consumes the next token into `targets`, wherever it appears. The
// remaining tokens are paired left to right: a flag takes the following
// non-flag token as its value, anything else is a bare value.
//
// Tokens may be wrapped in straight single or double quotes; a quoted span
// opens at the start of a token and closes at the first matching quote that
// is followed by whitespace or end of input. Typographic quotes are
// straightened first. An unterminated quote is kept as a literal character.
Expected<AvraeCommand, ParseError> parse_command(std::string_view text);

// True iff parse_command succeeds. Unknown verbs pass.
bool format_check(std::string_view text);

// Canonical text: `!<verb> <subject> -t <t1> ... <extra args>`. The subject
// and values are double-quoted when they contain whitespace; values that
// would otherwise re-parse differently (empty, `-`-prefixed, leading quote)
// are quoted as well.
std::string render(const AvraeCommand& cmd);

// Pulls the final command out of a model generation. `<think>` spans are
// removed, then the last non-empty `{{...}}` span wins; failing that, the
// last line starting with `!`.
std::optional<std::string> extract_command(std::string_view model_output);

}  // namespace avraeval
