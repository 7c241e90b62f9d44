#include "avraeval/command.hpp"

#include <cstddef>

#include "avraeval/text.hpp"

namespace avraeval {
namespace {

struct Token {
  std::string text;
  bool quoted = false;
};

bool is_quote(char c) { return c == '\'' || c == '"'; }

bool is_flag(const Token& tok) { return !tok.quoted && !tok.text.empty() && tok.text.front() == '-'; }

// Position of the quote closing a span opened at `open`, or npos.
std::size_t closing_quote(std::string_view s, std::size_t open) {
  const char q = s[open];
  for (std::size_t i = open + 1; i < s.size(); ++i) {
    if (s[i] == q && (i + 1 == s.size() || text::is_space(s[i + 1]))) return i;
  }
  return std::string_view::npos;
}

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < s.size()) {
    if (text::is_space(s[i])) {
      ++i;
      continue;
    }
    if (is_quote(s[i])) {
      const std::size_t close = closing_quote(s, i);
      if (close != std::string_view::npos) {
        tokens.push_back({std::string(s.substr(i + 1, close - i - 1)), true});
        i = close + 1;
        continue;
      }
    }
    const std::size_t start = i;
    while (i < s.size() && !text::is_space(s[i])) ++i;
    tokens.push_back({std::string(s.substr(start, i - start)), false});
  }
  return tokens;
}

bool has_space(std::string_view s) {
  for (char c : s) {
    if (text::is_space(c)) return true;
  }
  return false;
}

// `q` can wrap `s` if no inner occurrence of `q` would close the span early.
bool can_wrap(std::string_view s, char q) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == q && (i + 1 == s.size() || text::is_space(s[i + 1]))) return false;
  }
  return true;
}

std::string quote_if_needed(std::string_view s) {
  const bool needs = s.empty() || has_space(s) || s.front() == '-' || is_quote(s.front());
  if (!needs) return std::string(s);
  for (char q : {'"', '\''}) {
    if (can_wrap(s, q)) return q + std::string(s) + q;
  }
  return std::string(s);
}

std::string strip_think_spans(std::string_view s) {
  static constexpr std::string_view kOpen = "<think>";
  static constexpr std::string_view kClose = "</think>";

  // Reasoning models sometimes emit only the closing tag.
  const std::size_t first_open = s.find(kOpen);
  const std::size_t first_close = s.find(kClose);
  if (first_close != std::string_view::npos &&
      (first_open == std::string_view::npos || first_close < first_open)) {
    s.remove_prefix(first_close + kClose.size());
  }

  std::string out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const std::size_t open = s.find(kOpen, pos);
    if (open == std::string_view::npos) {
      out.append(s.substr(pos));
      break;
    }
    out.append(s.substr(pos, open - pos));
    const std::size_t close = s.find(kClose, open + kOpen.size());
    if (close == std::string_view::npos) break;  // unterminated: drop the rest
    pos = close + kClose.size();
  }
  return out;
}

}  // namespace

std::string_view to_string(ParseError err) {
  switch (err) {
    case ParseError::NoBang:
      return "no_bang";
    case ParseError::EmptyVerb:
      return "empty_verb";
    case ParseError::DanglingFlag:
      return "dangling_flag";
  }
  return "unknown";
}

Expected<AvraeCommand, ParseError> parse_command(std::string_view input) {
  const std::string straight = text::straighten_quotes(input);
  std::string_view s = text::trim(straight);
  if (s.empty() || s.front() != '!') return Unexpected{ParseError::NoBang};
  s.remove_prefix(1);

  std::size_t verb_end = 0;
  while (verb_end < s.size() && !text::is_space(s[verb_end])) ++verb_end;
  if (verb_end == 0) return Unexpected{ParseError::EmptyVerb};

  AvraeCommand cmd;
  cmd.raw = std::string(input);
  cmd.verb = std::string(s.substr(0, verb_end));

  const std::vector<Token> tokens = tokenize(s.substr(verb_end));
  std::size_t i = 0;
  for (; i < tokens.size() && !is_flag(tokens[i]); ++i) {
    if (tokens[i].text.empty()) continue;
    if (!cmd.subject.empty()) cmd.subject.push_back(' ');
    cmd.subject += tokens[i].text;
  }

  std::vector<Token> rest;
  for (; i < tokens.size(); ++i) {
    if (is_flag(tokens[i]) && tokens[i].text == "-t") {
      if (i + 1 >= tokens.size() || is_flag(tokens[i + 1]) || tokens[i + 1].text.empty()) {
        return Unexpected{ParseError::DanglingFlag};
      }
      cmd.targets.push_back(tokens[++i].text);
      continue;
    }
    rest.push_back(tokens[i]);
  }

  for (std::size_t k = 0; k < rest.size(); ++k) {
    ArgToken arg;
    if (is_flag(rest[k])) {
      arg.flag = rest[k].text;
      if (k + 1 < rest.size() && !is_flag(rest[k + 1])) arg.value = rest[++k].text;
    } else {
      arg.value = rest[k].text;
    }
    cmd.extra_args.push_back(std::move(arg));
  }
  return cmd;
}

bool format_check(std::string_view text) { return parse_command(text).has_value(); }

std::string render(const AvraeCommand& cmd) {
  std::string out = "!" + cmd.verb;
  if (!cmd.subject.empty()) {
    out += ' ';
    out += quote_if_needed(cmd.subject);
  }
  for (const auto& target : cmd.targets) {
    out += " -t ";
    out += quote_if_needed(target);
  }
  for (const auto& arg : cmd.extra_args) {
    if (arg.flag) {
      out += ' ';
      out += *arg.flag;
    }
    if (arg.value) {
      out += ' ';
      out += quote_if_needed(*arg.value);
    }
  }
  return out;
}

std::optional<std::string> extract_command(std::string_view model_output) {
  const std::string visible = strip_think_spans(model_output);
  const std::string_view s = visible;

  std::optional<std::string> last_span;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = s.find("{{", pos);
    if (open == std::string_view::npos) break;
    const std::size_t close = s.find("}}", open + 2);
    if (close == std::string_view::npos) break;
    const std::string_view inner = text::trim(s.substr(open + 2, close - open - 2));
    if (!inner.empty()) last_span = std::string(inner);
    pos = close + 2;
  }
  if (last_span) return last_span;

  std::optional<std::string> last_bang;
  std::size_t line_start = 0;
  while (line_start <= s.size()) {
    std::size_t line_end = s.find('\n', line_start);
    if (line_end == std::string_view::npos) line_end = s.size();
    const std::string_view line = text::trim(s.substr(line_start, line_end - line_start));
    if (!line.empty() && line.front() == '!') last_bang = std::string(line);
    line_start = line_end + 1;
  }
  return last_bang;
}

}  // namespace avraeval
