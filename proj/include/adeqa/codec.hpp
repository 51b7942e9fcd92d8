#pragma once

// Question templates and answer-sequence grammars.
//
// Entity lists travel as "<Start>a<next>b<next>c". Pair lists have two wire
// formats: tagged ("<Start><ade>a<suspect>s<ade>...") and alternating
// ("<Start>a<next>s<next>..."). Binary confirmations are "Yes" / "No".
// Decoders never throw; problems are reported through DecodeDiagnostics.

#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace adeqa::codec {

struct EntityPair {
  std::string ade;
  std::string suspect;

  friend bool operator==(const EntityPair&, const EntityPair&) = default;
};

enum class Task { AdeList, SuspectList, PairConfirm, JointPairs };

std::string_view task_name(Task task);
std::optional<Task> parse_task(std::string_view name);

enum class PairFormat { Tagged, Alternating };

std::string_view pair_format_name(PairFormat format);
std::optional<PairFormat> parse_pair_format(std::string_view name);

class CodecError : public std::runtime_error {
 public:
  enum class Kind { MissingPlaceholderArg, TokenCollision, EmptyEntity, InvalidGrammar, InvalidTemplate, BadConfig };

  CodecError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Lowercase, trim, collapse internal whitespace. The identity used for
// deduplication and matching everywhere.
std::string normalize_entity(std::string_view s);

struct QuestionTemplates {
  std::string name = "default";
  std::string ade_list = "what are the ADEs?";
  std::string suspect_list = "what are the suspects?";
  std::string pair_confirm = "is {ade} caused by {suspect}?";
  std::string joint_pairs = "what are the ADEs and suspects?";

  const std::string& for_task(Task task) const;

  // Throws CodecError::InvalidTemplate when placeholders are misplaced.
  void validate() const;

  static QuestionTemplates standard();
  // "What are the ADEs?" / "Was the {ade} caused by {suspect}?" phrasing.
  static QuestionTemplates narrative();
  static std::optional<QuestionTemplates> preset(std::string_view name);
};

std::string build_question(const QuestionTemplates& templates, Task task,
                           const std::optional<std::string>& ade = std::nullopt,
                           const std::optional<std::string>& suspect = std::nullopt);

// Inverse of build_question for PairConfirm. Every split point consistent with
// the template is returned, leftmost first, since surfaces may contain the
// template's connective text.
std::vector<EntityPair> parse_pair_question(const QuestionTemplates& templates,
                                            std::string_view question);

struct AnswerGrammar {
  std::string name = "tagged";
  std::string start_token = "<Start>";
  std::string next_token = "<next>";
  std::string ade_token = "<ade>";
  std::string suspect_token = "<suspect>";
  std::string no_suspect_token = "no-suspect";
  PairFormat pair_format = PairFormat::Tagged;

  // Tokens must be non-empty and pairwise distinct.
  void validate() const;

  static AnswerGrammar tagged();
  static AnswerGrammar alternating();
  static std::optional<AnswerGrammar> preset(std::string_view name);
};

struct DecodeDiagnostics {
  std::size_t dropped_fragments = 0;
  bool missing_start = false;
  std::size_t duplicates_removed = 0;

  bool malformed() const { return dropped_fragments > 0 || missing_start; }
  DecodeDiagnostics& operator+=(const DecodeDiagnostics& other);
};

template <typename T>
struct Decoded {
  T value;
  DecodeDiagnostics diagnostics;
};

std::string encode_entity_list(const std::vector<std::string>& entities, const AnswerGrammar& g);
Decoded<std::vector<std::string>> decode_entity_list(std::string_view answer, const AnswerGrammar& g);

std::string encode_pair_list(const std::vector<EntityPair>& pairs, const AnswerGrammar& g,
                             PairFormat format);
std::string encode_no_suspect(const AnswerGrammar& g);

// With no_suspect_enabled, an answer consisting of the sentinel (optionally
// after the start token) decodes to an empty, clean result.
Decoded<std::vector<EntityPair>> decode_pair_list(std::string_view answer, const AnswerGrammar& g,
                                                  PairFormat format, bool no_suspect_enabled = false);

enum class Binary { Yes, No, Unparseable };

std::string encode_bool(bool value);
Binary decode_bool(std::string_view answer);

// Order-preserving dedup by normalize_entity; returns the number removed.
std::size_t dedup_entities(std::vector<std::string>& entities);
std::size_t dedup_pairs(std::vector<EntityPair>& pairs);

struct CodecConfig {
  AnswerGrammar grammar;
  QuestionTemplates templates;
};

// Key-value document, one "key = value" per line, '#' comments. Keys:
// grammar (preset to start from), templates (preset), start_token,
// next_token, ade_token, suspect_token, no_suspect_token, pair_format,
// template.ade_list, template.suspect_list, template.pair_confirm,
// template.joint_pairs. Unknown keys are an error.
CodecConfig load_codec_config(std::istream& in);

}  // namespace adeqa::codec
