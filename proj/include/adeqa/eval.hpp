#pragma once

// Strict / partial entity matching and micro-averaged scoring.

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "adeqa/codec.hpp"
#include "adeqa/corpus.hpp"
#include "adeqa/pipeline.hpp"
#include "json.hpp"

namespace adeqa::eval {

class EvalError : public std::runtime_error {
 public:
  enum class Kind { MissingGold, DuplicatePrediction, UnsupportedFormat, BadReport, BadMode };

  EvalError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

enum class MatchKind { Strict, Partial };

struct MatchMode {
  MatchKind kind = MatchKind::Strict;
  double tau = 0.7;

  static MatchMode strict() { return {}; }
  static MatchMode partial(double tau = 0.7) { return {MatchKind::Partial, tau}; }
  void validate() const;
  std::string_view name() const { return kind == MatchKind::Strict ? "strict" : "partial"; }

  friend bool operator==(const MatchMode&, const MatchMode&) = default;
};

std::optional<MatchMode> parse_match_mode(std::string_view name, double tau);

// Edit distance over Unicode code points.
std::size_t levenshtein(std::string_view a, std::string_view b);

// 1 - lev / max(len); 1 for two empty strings.
double similarity(std::string_view a, std::string_view b);

// True when the whitespace tokens of one string occur as a contiguous run in
// the other. Empty strings only contain each other.
bool token_contains(std::string_view a, std::string_view b);

// Similarity when the strings match under `mode`, nullopt otherwise. Strict
// matches score 1. Inputs are expected to be normalized already.
std::optional<double> match_score(std::string_view pred, std::string_view gold, const MatchMode& mode);
bool entity_match(std::string_view pred, std::string_view gold, const MatchMode& mode);

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  double precision() const;
  double recall() const;
  double f1() const;

  friend bool operator==(const Counts&, const Counts&) = default;
};

// One-to-one assignment: admissible (pred, gold) pairs taken greedily by
// descending similarity, ties by (pred index, gold index), then extended by
// augmenting paths so tp is the maximum matching size.
Counts assign_matches(std::span<const std::string> preds, std::span<const std::string> golds, const MatchMode& mode);

// Pairs match when both components match; score is the mean similarity.
Counts assign_pair_matches(std::span<const codec::EntityPair> preds, std::span<const codec::EntityPair> golds,
                           const MatchMode& mode);

struct KindScore {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  Counts counts;

  static KindScore from(const Counts& c) { return {c.precision(), c.recall(), c.f1(), c}; }
  friend bool operator==(const KindScore&, const KindScore&) = default;
};

// Cells keyed gold/predicted.
struct Confusion {
  std::size_t gold_yes_pred_yes = 0;
  std::size_t gold_yes_pred_no = 0;
  std::size_t gold_no_pred_yes = 0;
  std::size_t gold_no_pred_no = 0;

  std::size_t total() const { return gold_yes_pred_yes + gold_yes_pred_no + gold_no_pred_yes + gold_no_pred_no; }
  bool diagonal() const { return gold_yes_pred_no == 0 && gold_no_pred_yes == 0; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct BucketCounts {
  std::size_t texts = 0;
  std::size_t correct = 0;
  std::size_t wrong = 0;
  std::size_t missed = 0;

  friend bool operator==(const BucketCounts&, const BucketCounts&) = default;
};

inline constexpr std::string_view kAde = "ade";
inline constexpr std::string_view kSuspect = "suspect";
inline constexpr std::string_view kRelation = "relation";

struct EvalReport {
  MatchMode mode;
  std::map<std::string, KindScore> per_kind;
  std::optional<Confusion> confusion;
  // Buckets "1".."4" and "5+" by gold ADEs + suspects per text.
  std::map<std::string, BucketCounts> per_count_breakdown;
  std::size_t num_texts = 0;
  // Gold texts with no prediction; their gold entities count as missed.
  std::size_t skipped_texts = 0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Fills mode, per_kind, num_texts and skipped_texts.
EvalReport micro_scores(std::span<const pipeline::Prediction> predictions, std::span<const corpus::Example> gold,
                        const MatchMode& mode);

Confusion re_confusion(std::span<const pipeline::RePairJudgment> judgments);

// Candidate pairs gold_ades x gold_suspects per text, predicted when the
// prediction holds that pair (normalized equality).
std::vector<pipeline::RePairJudgment> judgments_from_predictions(std::span<const pipeline::Prediction> predictions,
                                                                 std::span<const corpus::Example> gold);

std::string count_bucket(std::size_t entities);

std::map<std::string, BucketCounts> per_count_breakdown(std::span<const pipeline::Prediction> predictions,
                                                        std::span<const corpus::Example> gold,
                                                        const MatchMode& mode);

EvalReport evaluate(std::span<const pipeline::Prediction> predictions, std::span<const corpus::Example> gold,
                    const MatchMode& mode, std::optional<std::span<const pipeline::RePairJudgment>> judgments);

enum class ReportFormat { Json, Csv, Markdown };

std::optional<ReportFormat> parse_report_format(std::string_view name);

std::string emit_report(const EvalReport& report, ReportFormat format);
// Throws EvalError::UnsupportedFormat for names other than json, csv, markdown.
std::string emit_report(const EvalReport& report, std::string_view format);
nlohmann::ordered_json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

}  // namespace adeqa::eval
