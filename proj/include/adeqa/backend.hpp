#pragma once

// Generation backends: given a question and a context, produce an answer
// string. Implementations must be safe for concurrent generate() calls.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "adeqa/codec.hpp"
#include "adeqa/corpus.hpp"
#include "json.hpp"

namespace adeqa::backend {

struct GenerationRequest {
  std::string question;
  std::string context;
  int max_new_tokens = 32;
  bool repetition_penalty_disabled = true;
  // Caller-side tag for error and retry accounting. Never sent on the wire.
  std::string request_id;

  // Throws std::invalid_argument on empty question/context or max_new_tokens < 1.
  void validate() const;
};

struct GenerationResponse {
  std::string text;
  double latency_ms = 0.0;
};

class BackendError : public std::runtime_error {
 public:
  enum class Kind { Unavailable, Timeout, ProtocolError, UnknownContext };

  BackendError(Kind kind, std::string request_id, const std::string& what)
      : std::runtime_error(what), kind_(kind), request_id_(std::move(request_id)) {}

  Kind kind() const { return kind_; }
  const std::string& request_id() const { return request_id_; }

 private:
  Kind kind_;
  std::string request_id_;
};

std::string_view error_kind_name(BackendError::Kind kind);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual GenerationResponse generate(const GenerationRequest& request) = 0;
  virtual std::string describe() const = 0;
};

// Wire format of POST /v1/generate.
nlohmann::ordered_json request_to_wire(const GenerationRequest& request);
// Throws BackendError::ProtocolError unless body is {"text": string, ...}.
GenerationResponse response_from_wire(std::string_view body, const std::string& request_id);

struct NoiseConfig {
  double drop_prob = 0.0;
  double spurious_prob = 0.0;
  double corrupt_prob = 0.0;
  double flip_prob = 0.0;
  std::uint32_t seed = 0;

  void validate() const;
  bool is_zero() const { return drop_prob == 0 && spurious_prob == 0 && corrupt_prob == 0 && flip_prob == 0; }
};

struct MockOptions {
  codec::AnswerGrammar grammar;
  codec::QuestionTemplates templates;
  // Answer JointPairs questions for texts without pairs with the sentinel.
  bool no_suspect_sentinel = false;
};

// Answers every question from gold annotations, then applies seeded noise.
// Every random draw is derived from (seed, question, context), so identical
// requests get identical answers regardless of call order or threading.
class MockBackend final : public Backend {
 public:
  MockBackend(std::span<const corpus::Example> gold, NoiseConfig noise, MockOptions options);

  GenerationResponse generate(const GenerationRequest& request) override;
  std::string describe() const override;

 private:
  const corpus::Example& lookup(const GenerationRequest& request) const;
  std::vector<std::string> noisy_entities(const std::vector<std::string>& gold,
                                          const std::vector<std::string>& vocabulary,
                                          std::uint64_t stream) const;
  std::vector<codec::EntityPair> noisy_pairs(const std::vector<codec::EntityPair>& gold, std::uint64_t stream) const;
  bool confirm(const corpus::Example& ex, const GenerationRequest& request) const;

  std::vector<corpus::Example> gold_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> ade_vocabulary_;
  std::vector<std::string> suspect_vocabulary_;
  NoiseConfig noise_;
  MockOptions options_;
};

struct HttpOptions {
  std::string endpoint;  // e.g. "http://127.0.0.1:8080" (an optional path prefix is kept)
  int timeout_ms = 30000;
  int max_retries = 3;
  int backoff_base_ms = 100;
  std::size_t concurrency_limit = 4;
};

// Client for the generation service wire protocol. Retries transport errors,
// 5xx and 429 with exponential backoff; other failures are not retried.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpOptions options);

  GenerationResponse generate(const GenerationRequest& request) override;
  std::string describe() const override;
  bool healthy() const;

  std::size_t retries() const { return retries_.load(); }
  std::size_t peak_in_flight() const { return peak_in_flight_.load(); }

 private:
  class Slot;

  HttpOptions options_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t in_flight_ = 0;
  std::atomic<std::size_t> peak_in_flight_{0};
  std::atomic<std::size_t> retries_{0};
};

}  // namespace adeqa::backend
