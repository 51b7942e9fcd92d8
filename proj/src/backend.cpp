#include "adeqa/backend.hpp"

namespace adeqa::backend {

void GenerationRequest::validate() const {
  if (question.empty()) throw std::invalid_argument("generation request has an empty question");
  if (context.empty()) throw std::invalid_argument("generation request has an empty context");
  if (max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be at least 1");
}

std::string_view error_kind_name(BackendError::Kind kind) {
  switch (kind) {
    case BackendError::Kind::Unavailable: return "unavailable";
    case BackendError::Kind::Timeout: return "timeout";
    case BackendError::Kind::ProtocolError: return "protocol_error";
    case BackendError::Kind::UnknownContext: return "unknown_context";
  }
  return "unknown";
}

nlohmann::ordered_json request_to_wire(const GenerationRequest& request) {
  nlohmann::ordered_json body;
  body["question"] = request.question;
  body["context"] = request.context;
  body["max_new_tokens"] = request.max_new_tokens;
  body["repetition_penalty_disabled"] = request.repetition_penalty_disabled;
  return body;
}

GenerationResponse response_from_wire(std::string_view body, const std::string& request_id) {
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw BackendError(BackendError::Kind::ProtocolError, request_id, "response body is not a JSON object");
  }
  auto it = j.find("text");
  if (it == j.end() || !it->is_string()) {
    throw BackendError(BackendError::Kind::ProtocolError, request_id, "response is missing string field \"text\"");
  }
  GenerationResponse resp;
  resp.text = it->get<std::string>();
  return resp;
}

void NoiseConfig::validate() const {
  for (double p : {drop_prob, spurious_prob, corrupt_prob, flip_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("noise probabilities must lie in [0, 1]");
  }
}

}  // namespace adeqa::backend
