#pragma once

// Reader for the pipe-delimited drug/ADE relation corpus:
//
//   PMID|TEXT|ADE|ADE_BEGIN|ADE_END|DRUG|DRUG_BEGIN|DRUG_END
//
// Rows sharing a (whitespace-normalized) text are grouped into one Example.

#include <cstdint>
#include <istream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "adeqa/codec.hpp"
#include "json.hpp"

namespace adeqa::corpus {

struct RawRecord {
  std::string pmid;
  std::string text;
  std::string ade;
  std::int64_t ade_begin = 0;
  std::int64_t ade_end = 0;
  std::string drug;
  std::int64_t drug_begin = 0;
  std::int64_t drug_end = 0;

  friend bool operator==(const RawRecord&, const RawRecord&) = default;
};

class CorpusError : public std::runtime_error {
 public:
  enum class Kind { MalformedRecord, NonNumericOffset, EmptyField, InvalidOffsetRange, TrainSizeTooLarge, InvalidSplit };

  CorpusError(Kind kind, std::size_t line_no, std::size_t field_count, const std::string& what)
      : std::runtime_error(what), kind_(kind), line_no_(line_no), field_count_(field_count) {}

  Kind kind() const { return kind_; }
  // 1-based; 0 when the error is not tied to a line.
  std::size_t line_no() const { return line_no_; }
  std::size_t field_count() const { return field_count_; }

 private:
  Kind kind_;
  std::size_t line_no_;
  std::size_t field_count_;
};

std::vector<RawRecord> parse_corpus(std::istream& in);
RawRecord parse_record(std::string_view line, std::size_t line_no);
std::string serialize_record(const RawRecord& record);

enum class OffsetStatus { Valid, RecoveredBySearch, Failed };

OffsetStatus validate_offsets(const RawRecord& record);

struct Example {
  std::string id;
  std::vector<std::string> pmids;
  std::string text;
  std::vector<codec::EntityPair> gold_pairs;
  std::vector<std::string> gold_ades;
  std::vector<std::string> gold_suspects;

  friend bool operator==(const Example&, const Example&) = default;
};

// Case-preserving whitespace collapse; the grouping key.
std::string normalize_text(std::string_view text);
std::string example_id(std::string_view normalized_text);

// Builds gold_ades / gold_suspects from gold_pairs (deduplicated, in order).
void project_pairs(Example& example);

std::vector<Example> group_examples(std::span<const RawRecord> records);

struct SplitSpec {
  std::size_t train_size = 5500;
  std::uint32_t seed = 0;
};

struct Split {
  std::vector<Example> train;
  std::vector<Example> eval;
};

Split split(std::span<const Example> examples, const SplitSpec& spec);

struct CorpusStats {
  std::size_t num_texts = 0;
  std::size_t num_records = 0;
  std::map<std::size_t, std::size_t> ades_per_text_hist;
  std::map<std::size_t, std::size_t> suspects_per_text_hist;
  std::map<std::size_t, std::size_t> pairs_per_text_hist;
  std::size_t num_unique_ades = 0;
  std::size_t num_unique_suspects = 0;
  double pct_multi_entity = 0.0;
  std::size_t offset_valid = 0;
  std::size_t offset_recovered = 0;
  std::size_t offset_failed = 0;
};

CorpusStats stats(std::span<const Example> examples, std::span<const RawRecord> records);

// {"id", "pmids": [..], "text", "pairs": [["ade","suspect"], ..]}
void to_json(nlohmann::json& j, const Example& ex);
void from_json(const nlohmann::json& j, Example& ex);
nlohmann::ordered_json stats_to_json(const CorpusStats& s);

void write_examples_jsonl(std::ostream& out, std::span<const Example> examples);
// Throws CorpusError::MalformedRecord carrying the offending line number.
std::vector<Example> read_examples_jsonl(std::istream& in);

}  // namespace adeqa::corpus
