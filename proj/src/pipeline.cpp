#include "adeqa/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <thread>

#include "adeqa/text.hpp"

namespace adeqa::pipeline {

namespace {

using NormPair = std::pair<std::string, std::string>;

NormPair norm(const codec::EntityPair& p) {
  return {codec::normalize_entity(p.ade), codec::normalize_entity(p.suspect)};
}

std::set<NormPair> gold_pair_set(const corpus::Example& ex) {
  std::set<NormPair> out;
  for (const auto& p : ex.gold_pairs) out.insert(norm(p));
  return out;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

SkippedText skip_from(const std::string& id, const std::exception& e) {
  if (const auto* be = dynamic_cast<const backend::BackendError*>(&e)) {
    return {id, std::string(backend::error_kind_name(be->kind())), be->what()};
  }
  return {id, "error", e.what()};
}

backend::GenerationRequest make_request(const PipelineConfig& config, std::string question, const TextInput& text,
                                        std::string request_id) {
  backend::GenerationRequest req;
  req.question = std::move(question);
  req.context = text.context;
  req.max_new_tokens = config.max_new_tokens;
  req.repetition_penalty_disabled = true;
  req.request_id = std::move(request_id);
  return req;
}

RunResult run_batch(std::span<const TextInput> texts, const PipelineConfig& config,
                    const std::function<Prediction(const TextInput&)>& one) {
  config.validate();
  std::vector<std::optional<Prediction>> preds(texts.size());
  std::vector<std::optional<SkippedText>> skips(texts.size());
  parallel_for(texts.size(), config.concurrency_limit, [&](std::size_t i) {
    try {
      preds[i] = one(texts[i]);
    } catch (const std::exception& e) {
      skips[i] = skip_from(texts[i].id, e);
    }
  });
  RunResult result;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (preds[i]) result.predictions.push_back(std::move(*preds[i]));
    if (skips[i]) result.skipped.push_back(std::move(*skips[i]));
  }
  return result;
}

std::vector<std::string> string_array(const nlohmann::json& j, const char* key) {
  return j.at(key).get<std::vector<std::string>>();
}

std::vector<codec::EntityPair> pair_array(const nlohmann::json& j) {
  std::vector<codec::EntityPair> out;
  for (const auto& p : j.at("pairs")) {
    if (!p.is_array() || p.size() != 2) throw std::runtime_error("pair must be [ade, suspect]");
    out.push_back({p[0].get<std::string>(), p[1].get<std::string>()});
  }
  return out;
}

nlohmann::ordered_json pairs_json(const std::vector<codec::EntityPair>& pairs) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& p : pairs) arr.push_back({p.ade, p.suspect});
  return arr;
}

template <typename T, typename Parse>
std::vector<T> read_lines(std::istream& in, Parse parse) {
  std::vector<T> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(parse(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

void PipelineConfig::validate() const {
  if (approach != 1 && approach != 2) throw std::invalid_argument("approach must be 1 or 2");
  if (negative_ratio && !(*negative_ratio >= 0.0)) throw std::invalid_argument("negative ratio must be >= 0");
  if (concurrency_limit < 1) throw std::invalid_argument("concurrency limit must be at least 1");
  if (max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be at least 1");
  grammar.validate();
  templates.validate();
}

std::vector<QAInstance> prepare_training_pairs(std::span<const corpus::Example> examples,
                                               const PipelineConfig& config) {
  config.validate();
  using codec::Task;
  const auto& g = config.grammar;
  const auto& t = config.templates;
  std::vector<QAInstance> out;
  for (const corpus::Example& ex : examples) {
    if (config.approach == 2) {
      std::string answer = ex.gold_pairs.empty() && config.no_suspect_sentinel_enabled
                               ? codec::encode_no_suspect(g)
                               : codec::encode_pair_list(ex.gold_pairs, g, g.pair_format);
      out.push_back({ex.id, Task::JointPairs, codec::build_question(t, Task::JointPairs), ex.text, answer});
      continue;
    }
    out.push_back({ex.id, Task::AdeList, codec::build_question(t, Task::AdeList), ex.text,
                   codec::encode_entity_list(ex.gold_ades, g)});
    out.push_back({ex.id, Task::SuspectList, codec::build_question(t, Task::SuspectList), ex.text,
                   codec::encode_entity_list(ex.gold_suspects, g)});
    for (const auto& p : ex.gold_pairs) {
      out.push_back({ex.id, Task::PairConfirm, codec::build_question(t, Task::PairConfirm, p.ade, p.suspect),
                     ex.text, codec::encode_bool(true)});
    }

    std::set<NormPair> gold = gold_pair_set(ex);
    std::vector<codec::EntityPair> negatives;
    for (const auto& a : ex.gold_ades) {
      for (const auto& s : ex.gold_suspects) {
        if (!gold.count({codec::normalize_entity(a), codec::normalize_entity(s)})) negatives.push_back({a, s});
      }
    }
    if (config.negative_ratio) {
      auto keep = static_cast<std::size_t>(std::floor(*config.negative_ratio * static_cast<double>(ex.gold_pairs.size())));
      if (keep < negatives.size()) {
        std::vector<std::size_t> idx(negatives.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::mt19937_64 rng(text::fnv1a64(ex.id, text::fnv1a64(std::to_string(config.seed))));
        for (std::size_t i = 0; i < keep; ++i) {
          std::size_t span = idx.size() - i;
          std::size_t j = i + std::min(span - 1, static_cast<std::size_t>((rng() >> 11) * 0x1.0p-53 * span));
          std::swap(idx[i], idx[j]);
        }
        idx.resize(keep);
        std::sort(idx.begin(), idx.end());
        std::vector<codec::EntityPair> chosen;
        for (std::size_t i : idx) chosen.push_back(negatives[i]);
        negatives = std::move(chosen);
      }
    }
    for (const auto& p : negatives) {
      out.push_back({ex.id, Task::PairConfirm, codec::build_question(t, Task::PairConfirm, p.ade, p.suspect),
                     ex.text, codec::encode_bool(false)});
    }
  }
  return out;
}

std::vector<TextInput> texts_of(std::span<const corpus::Example> examples) {
  std::vector<TextInput> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back({ex.id, ex.text});
  return out;
}

Prediction run_approach1_one(const TextInput& text, backend::Backend& backend, const PipelineConfig& config) {
  using codec::Task;
  Prediction pred;
  pred.example_id = text.id;
  auto ask = [&](std::string question, std::string tag) {
    ++pred.backend_calls;
    return backend.generate(make_request(config, std::move(question), text, text.id + "/" + tag)).text;
  };

  auto ades = codec::decode_entity_list(ask(codec::build_question(config.templates, Task::AdeList), "ade_list"),
                                        config.grammar);
  auto suspects = codec::decode_entity_list(
      ask(codec::build_question(config.templates, Task::SuspectList), "suspect_list"), config.grammar);
  pred.ades = std::move(ades.value);
  pred.suspects = std::move(suspects.value);
  pred.diagnostics += ades.diagnostics;
  pred.diagnostics += suspects.diagnostics;

  for (std::size_t i = 0; i < pred.ades.size(); ++i) {
    for (std::size_t j = 0; j < pred.suspects.size(); ++j) {
      std::string q = codec::build_question(config.templates, Task::PairConfirm, pred.ades[i], pred.suspects[j]);
      codec::Binary answer = codec::decode_bool(ask(std::move(q), "pair_confirm#" + std::to_string(i) + "," + std::to_string(j)));
      if (answer == codec::Binary::Unparseable) ++pred.unparseable_binary;
      if (answer == codec::Binary::Yes) pred.pairs.push_back({pred.ades[i], pred.suspects[j]});
    }
  }
  return pred;
}

Prediction run_approach2_one(const TextInput& text, backend::Backend& backend, const PipelineConfig& config) {
  Prediction pred;
  pred.example_id = text.id;
  ++pred.backend_calls;
  std::string answer = backend
                           .generate(make_request(config, codec::build_question(config.templates, codec::Task::JointPairs),
                                                  text, text.id + "/joint_pairs"))
                           .text;
  auto decoded = codec::decode_pair_list(answer, config.grammar, config.grammar.pair_format,
                                         config.no_suspect_sentinel_enabled);
  pred.pairs = std::move(decoded.value);
  pred.diagnostics = decoded.diagnostics;
  for (const auto& p : pred.pairs) {
    pred.ades.push_back(p.ade);
    pred.suspects.push_back(p.suspect);
  }
  codec::dedup_entities(pred.ades);
  codec::dedup_entities(pred.suspects);
  return pred;
}

RunResult run_approach1(std::span<const TextInput> texts, backend::Backend& backend, const PipelineConfig& config) {
  return run_batch(texts, config, [&](const TextInput& t) { return run_approach1_one(t, backend, config); });
}

RunResult run_approach2(std::span<const TextInput> texts, backend::Backend& backend, const PipelineConfig& config) {
  return run_batch(texts, config, [&](const TextInput& t) { return run_approach2_one(t, backend, config); });
}

RunResult run(std::span<const TextInput> texts, backend::Backend& backend, const PipelineConfig& config) {
  return config.approach == 2 ? run_approach2(texts, backend, config) : run_approach1(texts, backend, config);
}

JudgeResult judge_relations(std::span<const corpus::Example> gold, backend::Backend& backend,
                            const PipelineConfig& config) {
  config.validate();
  std::vector<std::vector<RePairJudgment>> per_text(gold.size());
  std::vector<std::optional<SkippedText>> skips(gold.size());
  parallel_for(gold.size(), config.concurrency_limit, [&](std::size_t i) {
    const corpus::Example& ex = gold[i];
    TextInput text{ex.id, ex.text};
    std::set<NormPair> positives = gold_pair_set(ex);
    std::vector<RePairJudgment> local;
    try {
      for (const auto& a : ex.gold_ades) {
        for (const auto& s : ex.gold_suspects) {
          std::string q = codec::build_question(config.templates, codec::Task::PairConfirm, a, s);
          std::string answer = backend.generate(make_request(config, std::move(q), text, ex.id + "/judge")).text;
          bool is_gold = positives.count({codec::normalize_entity(a), codec::normalize_entity(s)}) > 0;
          local.push_back({ex.id, a, s, is_gold, codec::decode_bool(answer) == codec::Binary::Yes});
        }
      }
      per_text[i] = std::move(local);
    } catch (const std::exception& e) {
      skips[i] = skip_from(ex.id, e);
    }
  });
  JudgeResult result;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (auto& j : per_text[i]) result.judgments.push_back(std::move(j));
    if (skips[i]) result.skipped.push_back(std::move(*skips[i]));
  }
  return result;
}

nlohmann::ordered_json to_json(const QAInstance& q) {
  nlohmann::ordered_json j;
  j["example_id"] = q.example_id;
  j["task"] = codec::task_name(q.task);
  j["question"] = q.question;
  j["context"] = q.context;
  j["answer"] = q.answer;
  return j;
}

QAInstance qa_instance_from_json(const nlohmann::json& j) {
  QAInstance q;
  q.example_id = j.at("example_id").get<std::string>();
  auto task = codec::parse_task(j.at("task").get<std::string>());
  if (!task) throw std::runtime_error("unknown task '" + j.at("task").get<std::string>() + "'");
  q.task = *task;
  q.question = j.at("question").get<std::string>();
  q.context = j.at("context").get<std::string>();
  q.answer = j.at("answer").get<std::string>();
  return q;
}

nlohmann::ordered_json to_json(const Prediction& p) {
  nlohmann::ordered_json j;
  j["example_id"] = p.example_id;
  j["ades"] = p.ades;
  j["suspects"] = p.suspects;
  j["pairs"] = pairs_json(p.pairs);
  j["backend_calls"] = p.backend_calls;
  j["malformed"] = p.diagnostics.malformed();
  return j;
}

Prediction prediction_from_json(const nlohmann::json& j) {
  Prediction p;
  p.example_id = j.at("example_id").get<std::string>();
  p.ades = string_array(j, "ades");
  p.suspects = string_array(j, "suspects");
  p.pairs = pair_array(j);
  p.backend_calls = j.value("backend_calls", std::size_t{0});
  return p;
}

nlohmann::ordered_json to_json(const RePairJudgment& r) {
  nlohmann::ordered_json j;
  j["example_id"] = r.example_id;
  j["ade"] = r.ade;
  j["suspect"] = r.suspect;
  j["gold"] = r.gold;
  j["predicted"] = r.predicted;
  return j;
}

RePairJudgment judgment_from_json(const nlohmann::json& j) {
  return {j.at("example_id").get<std::string>(), j.at("ade").get<std::string>(), j.at("suspect").get<std::string>(),
          j.at("gold").get<bool>(), j.at("predicted").get<bool>()};
}

nlohmann::ordered_json to_json(const SkippedText& s) {
  nlohmann::ordered_json j;
  j["example_id"] = s.example_id;
  j["error"] = s.error_kind;
  j["message"] = s.message;
  return j;
}

std::vector<QAInstance> read_qa_instances(std::istream& in) {
  return read_lines<QAInstance>(in, qa_instance_from_json);
}

std::vector<Prediction> read_predictions(std::istream& in) {
  return read_lines<Prediction>(in, prediction_from_json);
}

std::vector<RePairJudgment> read_judgments(std::istream& in) {
  return read_lines<RePairJudgment>(in, judgment_from_json);
}

}  // namespace adeqa::pipeline
