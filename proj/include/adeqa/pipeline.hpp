#pragma once

// Approach 1: ask for ADEs, ask for suspects, then confirm every
// (ade, suspect) combination with a yes/no question.
// Approach 2: ask once for all (ade, suspect) tuples.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adeqa/backend.hpp"
#include "adeqa/codec.hpp"
#include "adeqa/corpus.hpp"
#include "json.hpp"

namespace adeqa::pipeline {

struct PipelineConfig {
  int approach = 1;
  codec::AnswerGrammar grammar;
  codec::QuestionTemplates templates;
  // Negative PairConfirm instances per positive; nullopt keeps every
  // available negative.
  std::optional<double> negative_ratio;
  bool no_suspect_sentinel_enabled = false;
  std::size_t concurrency_limit = 1;
  std::uint32_t seed = 0;
  int max_new_tokens = 32;

  void validate() const;
};

struct QAInstance {
  std::string example_id;
  codec::Task task = codec::Task::AdeList;
  std::string question;
  std::string context;
  std::string answer;

  friend bool operator==(const QAInstance&, const QAInstance&) = default;
};

std::vector<QAInstance> prepare_training_pairs(std::span<const corpus::Example> examples,
                                               const PipelineConfig& config);

struct TextInput {
  std::string id;
  std::string context;
};

std::vector<TextInput> texts_of(std::span<const corpus::Example> examples);

struct Prediction {
  std::string example_id;
  std::vector<std::string> ades;
  std::vector<std::string> suspects;
  std::vector<codec::EntityPair> pairs;
  codec::DecodeDiagnostics diagnostics;
  std::size_t backend_calls = 0;
  // Binary answers that were neither yes nor no; treated as no.
  std::size_t unparseable_binary = 0;
};

struct SkippedText {
  std::string example_id;
  std::string error_kind;
  std::string message;
};

struct RunResult {
  // In input order; skipped texts have no prediction.
  std::vector<Prediction> predictions;
  std::vector<SkippedText> skipped;
};

Prediction run_approach1_one(const TextInput& text, backend::Backend& backend, const PipelineConfig& config);
Prediction run_approach2_one(const TextInput& text, backend::Backend& backend, const PipelineConfig& config);

// Per-text backend failures are recorded in RunResult::skipped; the batch
// always completes. Up to config.concurrency_limit texts are processed at once.
RunResult run_approach1(std::span<const TextInput> texts, backend::Backend& backend, const PipelineConfig& config);
RunResult run_approach2(std::span<const TextInput> texts, backend::Backend& backend, const PipelineConfig& config);
RunResult run(std::span<const TextInput> texts, backend::Backend& backend, const PipelineConfig& config);

struct RePairJudgment {
  std::string example_id;
  std::string ade;
  std::string suspect;
  bool gold = false;
  bool predicted = false;

  friend bool operator==(const RePairJudgment&, const RePairJudgment&) = default;
};

struct JudgeResult {
  std::vector<RePairJudgment> judgments;
  std::vector<SkippedText> skipped;
};

// Relation extraction scored on its own: PairConfirm over every
// gold_ades x gold_suspects candidate of each text.
JudgeResult judge_relations(std::span<const corpus::Example> gold, backend::Backend& backend,
                            const PipelineConfig& config);

nlohmann::ordered_json to_json(const QAInstance& instance);
QAInstance qa_instance_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const Prediction& prediction);
Prediction prediction_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const RePairJudgment& judgment);
RePairJudgment judgment_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const SkippedText& skipped);

// One JSON document per line. Parse failures throw std::runtime_error naming
// the 1-based line number.
template <typename T>
void write_jsonl(std::ostream& out, std::span<const T> items) {
  for (const T& item : items) out << to_json(item).dump() << '\n';
}

std::vector<QAInstance> read_qa_instances(std::istream& in);
std::vector<Prediction> read_predictions(std::istream& in);
std::vector<RePairJudgment> read_judgments(std::istream& in);

}  // namespace adeqa::pipeline
