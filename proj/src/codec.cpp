#include "adeqa/codec.hpp"

#include <set>
#include <unordered_set>

#include "adeqa/text.hpp"

namespace adeqa::codec {

namespace {

constexpr std::string_view kAdeSlot = "{ade}";
constexpr std::string_view kSuspectSlot = "{suspect}";

std::size_t count_occurrences(std::string_view s, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t n = 0;
  for (std::size_t pos = s.find(needle); pos != std::string_view::npos;
       pos = s.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

std::vector<std::string_view> grammar_tokens(const AnswerGrammar& g) {
  return {g.start_token, g.next_token, g.ade_token, g.suspect_token};
}

void check_surface(std::string_view surface, const AnswerGrammar& g) {
  if (text::trim(surface).empty()) {
    throw CodecError(CodecError::Kind::EmptyEntity, "entity surface is empty");
  }
  for (std::string_view tok : grammar_tokens(g)) {
    if (surface.find(tok) != std::string_view::npos) {
      throw CodecError(CodecError::Kind::TokenCollision,
                       "entity '" + std::string(surface) + "' contains grammar token " + std::string(tok));
    }
  }
}

// Removes a leading start token. Leading whitespace emitted by a model is
// tolerated.
std::string_view strip_start(std::string_view answer, const AnswerGrammar& g, DecodeDiagnostics& diag) {
  std::string_view body = text::trim(answer);
  if (text::starts_with(body, g.start_token)) {
    return body.substr(g.start_token.size());
  }
  diag.missing_start = true;
  return body;
}

bool is_no_suspect(std::string_view answer, const AnswerGrammar& g) {
  std::string_view body = text::trim(answer);
  if (text::starts_with(body, g.start_token)) body = text::trim(body.substr(g.start_token.size()));
  return !g.no_suspect_token.empty() && body == g.no_suspect_token;
}

// Splits on next_token, trims, drops and counts empty fragments.
std::vector<std::string> split_fragments(std::string_view body, const AnswerGrammar& g,
                                         DecodeDiagnostics& diag) {
  std::vector<std::string> out;
  if (text::trim(body).empty()) return out;
  for (const std::string& frag : text::split(body, g.next_token)) {
    std::string_view t = text::trim(frag);
    if (t.empty()) {
      ++diag.dropped_fragments;
    } else {
      out.emplace_back(t);
    }
  }
  return out;
}

std::string_view strip_next_edges(std::string_view s, const AnswerGrammar& g) {
  s = text::trim(s);
  bool changed = true;
  while (changed && !g.next_token.empty()) {
    changed = false;
    if (text::starts_with(s, g.next_token)) {
      s = text::trim(s.substr(g.next_token.size()));
      changed = true;
    }
    if (s.size() >= g.next_token.size() && s.substr(s.size() - g.next_token.size()) == g.next_token) {
      s = text::trim(s.substr(0, s.size() - g.next_token.size()));
      changed = true;
    }
  }
  return s;
}

std::vector<EntityPair> decode_tagged(std::string_view body, const AnswerGrammar& g,
                                      DecodeDiagnostics& diag) {
  std::vector<EntityPair> pairs;
  std::vector<std::string> segments = text::split(body, g.ade_token);
  // Anything before the first <ade> is stray output.
  if (!strip_next_edges(segments.front(), g).empty()) ++diag.dropped_fragments;
  for (std::size_t i = 1; i < segments.size(); ++i) {
    std::string_view seg = segments[i];
    std::size_t sep = seg.find(g.suspect_token);
    if (sep == std::string_view::npos) {
      ++diag.dropped_fragments;
      continue;
    }
    std::string_view ade = strip_next_edges(seg.substr(0, sep), g);
    std::string_view rest = seg.substr(sep + g.suspect_token.size());
    std::string_view suspect = strip_next_edges(rest, g);
    if (suspect.find(g.suspect_token) != std::string_view::npos) {
      // "<ade>a<suspect>s1<suspect>s2": keep the first suspect only.
      suspect = strip_next_edges(suspect.substr(0, suspect.find(g.suspect_token)), g);
      ++diag.dropped_fragments;
    }
    if (ade.empty() || suspect.empty()) {
      ++diag.dropped_fragments;
      continue;
    }
    pairs.push_back({std::string(ade), std::string(suspect)});
  }
  return pairs;
}

std::vector<EntityPair> decode_alternating(std::string_view body, const AnswerGrammar& g,
                                           DecodeDiagnostics& diag) {
  std::vector<std::string> frags = split_fragments(body, g, diag);
  std::vector<EntityPair> pairs;
  for (std::size_t i = 0; i + 1 < frags.size(); i += 2) {
    pairs.push_back({frags[i], frags[i + 1]});
  }
  if (frags.size() % 2 == 1) ++diag.dropped_fragments;
  return pairs;
}

}  // namespace

std::string_view task_name(Task task) {
  switch (task) {
    case Task::AdeList: return "ade_list";
    case Task::SuspectList: return "suspect_list";
    case Task::PairConfirm: return "pair_confirm";
    case Task::JointPairs: return "joint_pairs";
  }
  return "unknown";
}

std::optional<Task> parse_task(std::string_view name) {
  for (Task t : {Task::AdeList, Task::SuspectList, Task::PairConfirm, Task::JointPairs}) {
    if (task_name(t) == name) return t;
  }
  return std::nullopt;
}

std::string_view pair_format_name(PairFormat format) {
  return format == PairFormat::Tagged ? "tagged" : "alternating";
}

std::optional<PairFormat> parse_pair_format(std::string_view name) {
  if (name == "tagged") return PairFormat::Tagged;
  if (name == "alternating") return PairFormat::Alternating;
  return std::nullopt;
}

std::string normalize_entity(std::string_view s) {
  return text::ascii_lower(text::collapse_whitespace(s));
}

const std::string& QuestionTemplates::for_task(Task task) const {
  switch (task) {
    case Task::AdeList: return ade_list;
    case Task::SuspectList: return suspect_list;
    case Task::PairConfirm: return pair_confirm;
    case Task::JointPairs: return joint_pairs;
  }
  return ade_list;
}

void QuestionTemplates::validate() const {
  for (Task t : {Task::AdeList, Task::SuspectList, Task::JointPairs}) {
    const std::string& tpl = for_task(t);
    if (text::trim(tpl).empty() || tpl.find(kAdeSlot) != std::string::npos ||
        tpl.find(kSuspectSlot) != std::string::npos) {
      throw CodecError(CodecError::Kind::InvalidTemplate,
                       "template for " + std::string(task_name(t)) + " must be non-empty and placeholder-free");
    }
  }
  if (count_occurrences(pair_confirm, kAdeSlot) != 1 || count_occurrences(pair_confirm, kSuspectSlot) != 1) {
    throw CodecError(CodecError::Kind::InvalidTemplate,
                     "pair_confirm template needs exactly one {ade} and one {suspect}");
  }
  std::size_t a = pair_confirm.find(kAdeSlot);
  std::size_t s = pair_confirm.find(kSuspectSlot);
  std::size_t first_end = std::min(a, s) + (a < s ? kAdeSlot.size() : kSuspectSlot.size());
  if (first_end == std::max(a, s)) {
    throw CodecError(CodecError::Kind::InvalidTemplate, "pair_confirm placeholders must be separated");
  }
}

QuestionTemplates QuestionTemplates::standard() { return QuestionTemplates{}; }

QuestionTemplates QuestionTemplates::narrative() {
  QuestionTemplates t;
  t.name = "narrative";
  t.ade_list = "What are the ADEs?";
  t.suspect_list = "What are the suspects?";
  t.pair_confirm = "Was the {ade} caused by {suspect}?";
  t.joint_pairs = "What are the ADEs and suspects?";
  return t;
}

std::optional<QuestionTemplates> QuestionTemplates::preset(std::string_view name) {
  if (name == "default") return standard();
  if (name == "narrative") return narrative();
  return std::nullopt;
}

std::string build_question(const QuestionTemplates& templates, Task task,
                           const std::optional<std::string>& ade,
                           const std::optional<std::string>& suspect) {
  std::string q = templates.for_task(task);
  if (task != Task::PairConfirm) return q;
  if (!ade || !suspect) {
    throw CodecError(CodecError::Kind::MissingPlaceholderArg,
                     std::string("pair_confirm question needs both ade and suspect, missing ") +
                         (!ade ? "ade" : "suspect"));
  }
  // Substitute in one left-to-right pass so a surface that itself contains
  // "{suspect}" is not expanded twice.
  std::string out;
  std::size_t pos = 0;
  while (pos < q.size()) {
    if (q.compare(pos, kAdeSlot.size(), kAdeSlot) == 0) {
      out += *ade;
      pos += kAdeSlot.size();
    } else if (q.compare(pos, kSuspectSlot.size(), kSuspectSlot) == 0) {
      out += *suspect;
      pos += kSuspectSlot.size();
    } else {
      out.push_back(q[pos++]);
    }
  }
  return out;
}

std::vector<EntityPair> parse_pair_question(const QuestionTemplates& templates, std::string_view question) {
  const std::string& tpl = templates.pair_confirm;
  std::size_t a = tpl.find(kAdeSlot);
  std::size_t s = tpl.find(kSuspectSlot);
  if (a == std::string::npos || s == std::string::npos) return {};
  bool ade_first = a < s;
  std::size_t first = std::min(a, s);
  std::size_t second = std::max(a, s);
  std::size_t first_len = ade_first ? kAdeSlot.size() : kSuspectSlot.size();
  std::size_t second_len = ade_first ? kSuspectSlot.size() : kAdeSlot.size();
  std::string_view tv = tpl;
  std::string_view prefix = tv.substr(0, first);
  std::string_view middle = tv.substr(first + first_len, second - first - first_len);
  std::string_view suffix = tv.substr(second + second_len);

  std::vector<EntityPair> out;
  if (question.size() < prefix.size() + middle.size() + suffix.size()) return out;
  if (!text::starts_with(question, prefix)) return out;
  if (question.substr(question.size() - suffix.size()) != suffix) return out;
  std::string_view inner = question.substr(prefix.size(), question.size() - prefix.size() - suffix.size());
  for (std::size_t pos = inner.find(middle); pos != std::string_view::npos; pos = inner.find(middle, pos + 1)) {
    std::string lhs(inner.substr(0, pos));
    std::string rhs(inner.substr(pos + middle.size()));
    if (lhs.empty() || rhs.empty()) continue;
    out.push_back(ade_first ? EntityPair{lhs, rhs} : EntityPair{rhs, lhs});
  }
  return out;
}

void AnswerGrammar::validate() const {
  std::vector<std::string_view> toks = {start_token, next_token, ade_token, suspect_token};
  std::set<std::string_view> seen;
  for (std::string_view t : toks) {
    if (t.empty()) throw CodecError(CodecError::Kind::InvalidGrammar, "grammar tokens must be non-empty");
    if (!seen.insert(t).second) {
      throw CodecError(CodecError::Kind::InvalidGrammar, "grammar token " + std::string(t) + " is repeated");
    }
  }
}

AnswerGrammar AnswerGrammar::tagged() { return AnswerGrammar{}; }

AnswerGrammar AnswerGrammar::alternating() {
  AnswerGrammar g;
  g.name = "alternating";
  g.pair_format = PairFormat::Alternating;
  return g;
}

std::optional<AnswerGrammar> AnswerGrammar::preset(std::string_view name) {
  if (name == "tagged") return tagged();
  if (name == "alternating") return alternating();
  return std::nullopt;
}

DecodeDiagnostics& DecodeDiagnostics::operator+=(const DecodeDiagnostics& other) {
  dropped_fragments += other.dropped_fragments;
  missing_start = missing_start || other.missing_start;
  duplicates_removed += other.duplicates_removed;
  return *this;
}

std::string encode_entity_list(const std::vector<std::string>& entities, const AnswerGrammar& g) {
  std::string out = g.start_token;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    check_surface(entities[i], g);
    if (i > 0) out += g.next_token;
    out += entities[i];
  }
  return out;
}

Decoded<std::vector<std::string>> decode_entity_list(std::string_view answer, const AnswerGrammar& g) {
  Decoded<std::vector<std::string>> result;
  std::string_view body = strip_start(answer, g, result.diagnostics);
  result.value = split_fragments(body, g, result.diagnostics);
  result.diagnostics.duplicates_removed = dedup_entities(result.value);
  return result;
}

std::string encode_pair_list(const std::vector<EntityPair>& pairs, const AnswerGrammar& g, PairFormat format) {
  std::string out = g.start_token;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    check_surface(pairs[i].ade, g);
    check_surface(pairs[i].suspect, g);
    if (format == PairFormat::Tagged) {
      out += g.ade_token + pairs[i].ade + g.suspect_token + pairs[i].suspect;
    } else {
      if (i > 0) out += g.next_token;
      out += pairs[i].ade + g.next_token + pairs[i].suspect;
    }
  }
  return out;
}

std::string encode_no_suspect(const AnswerGrammar& g) { return g.no_suspect_token; }

Decoded<std::vector<EntityPair>> decode_pair_list(std::string_view answer, const AnswerGrammar& g,
                                                  PairFormat format, bool no_suspect_enabled) {
  Decoded<std::vector<EntityPair>> result;
  if (no_suspect_enabled && is_no_suspect(answer, g)) return result;
  std::string_view body = strip_start(answer, g, result.diagnostics);
  result.value = format == PairFormat::Tagged ? decode_tagged(body, g, result.diagnostics)
                                              : decode_alternating(body, g, result.diagnostics);
  result.diagnostics.duplicates_removed = dedup_pairs(result.value);
  return result;
}

std::string encode_bool(bool value) { return value ? "Yes" : "No"; }

Binary decode_bool(std::string_view answer) {
  auto toks = text::tokens(answer);
  if (toks.empty()) return Binary::Unparseable;
  std::string_view word = toks.front();
  while (!word.empty() && std::string_view(".,;:!?").find(word.back()) != std::string_view::npos) {
    word.remove_suffix(1);
  }
  std::string lower = text::ascii_lower(word);
  if (lower == "yes") return Binary::Yes;
  if (lower == "no") return Binary::No;
  return Binary::Unparseable;
}

std::size_t dedup_entities(std::vector<std::string>& entities) {
  std::unordered_set<std::string> seen;
  std::vector<std::string> kept;
  kept.reserve(entities.size());
  for (std::string& e : entities) {
    if (seen.insert(normalize_entity(e)).second) kept.push_back(std::move(e));
  }
  std::size_t removed = entities.size() - kept.size();
  entities = std::move(kept);
  return removed;
}

std::size_t dedup_pairs(std::vector<EntityPair>& pairs) {
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<EntityPair> kept;
  kept.reserve(pairs.size());
  for (EntityPair& p : pairs) {
    if (seen.emplace(normalize_entity(p.ade), normalize_entity(p.suspect)).second) kept.push_back(std::move(p));
  }
  std::size_t removed = pairs.size() - kept.size();
  pairs = std::move(kept);
  return removed;
}

CodecConfig load_codec_config(std::istream& in) {
  CodecConfig cfg;
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = text::trim(line);
    if (body.empty() || body.front() == '#') continue;
    std::size_t eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw CodecError(CodecError::Kind::BadConfig, "line " + std::to_string(line_no) + ": expected key = value");
    }
    entries.emplace_back(std::string(text::trim(body.substr(0, eq))), std::string(text::trim(body.substr(eq + 1))));
  }
  // Presets first so individual keys override them regardless of line order.
  for (const auto& [key, value] : entries) {
    if (key == "grammar") {
      auto g = AnswerGrammar::preset(value);
      if (!g) throw CodecError(CodecError::Kind::BadConfig, "unknown grammar preset '" + value + "'");
      cfg.grammar = *g;
    } else if (key == "templates") {
      auto t = QuestionTemplates::preset(value);
      if (!t) throw CodecError(CodecError::Kind::BadConfig, "unknown template preset '" + value + "'");
      cfg.templates = *t;
    }
  }
  for (const auto& [key, value] : entries) {
    if (key == "grammar" || key == "templates") continue;
    if (key == "name") {
      cfg.grammar.name = value;
      cfg.templates.name = value;
    } else if (key == "start_token") {
      cfg.grammar.start_token = value;
    } else if (key == "next_token") {
      cfg.grammar.next_token = value;
    } else if (key == "ade_token") {
      cfg.grammar.ade_token = value;
    } else if (key == "suspect_token") {
      cfg.grammar.suspect_token = value;
    } else if (key == "no_suspect_token") {
      cfg.grammar.no_suspect_token = value;
    } else if (key == "pair_format") {
      auto f = parse_pair_format(value);
      if (!f) throw CodecError(CodecError::Kind::BadConfig, "unknown pair_format '" + value + "'");
      cfg.grammar.pair_format = *f;
    } else if (key == "template.ade_list") {
      cfg.templates.ade_list = value;
    } else if (key == "template.suspect_list") {
      cfg.templates.suspect_list = value;
    } else if (key == "template.pair_confirm") {
      cfg.templates.pair_confirm = value;
    } else if (key == "template.joint_pairs") {
      cfg.templates.joint_pairs = value;
    } else {
      throw CodecError(CodecError::Kind::BadConfig, "unknown key '" + key + "'");
    }
  }
  cfg.grammar.validate();
  cfg.templates.validate();
  return cfg;
}

}  // namespace adeqa::codec
