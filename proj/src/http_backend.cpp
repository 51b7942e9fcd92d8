#include <thread>

#include "adeqa/backend.hpp"
#include "httplib.h"

namespace adeqa::backend {

// RAII in-flight slot bounded by concurrency_limit.
class HttpBackend::Slot {
 public:
  explicit Slot(HttpBackend& owner) : owner_(owner) {
    std::unique_lock lock(owner_.mu_);
    owner_.cv_.wait(lock, [&] { return owner_.in_flight_ < owner_.options_.concurrency_limit; });
    ++owner_.in_flight_;
    std::size_t peak = owner_.peak_in_flight_.load();
    while (owner_.in_flight_ > peak && !owner_.peak_in_flight_.compare_exchange_weak(peak, owner_.in_flight_)) {
    }
  }
  ~Slot() {
    {
      std::lock_guard lock(owner_.mu_);
      --owner_.in_flight_;
    }
    owner_.cv_.notify_one();
  }
  Slot(const Slot&) = delete;
  Slot& operator=(const Slot&) = delete;

 private:
  HttpBackend& owner_;
};

HttpBackend::HttpBackend(HttpOptions options) : options_(std::move(options)) {
  if (options_.concurrency_limit < 1) throw std::invalid_argument("concurrency limit must be at least 1");
  if (options_.max_retries < 0) throw std::invalid_argument("max_retries must be non-negative");
  if (options_.timeout_ms < 1) throw std::invalid_argument("timeout must be positive");
  const std::string& ep = options_.endpoint;
  std::size_t scheme_end = ep.find("://");
  if (scheme_end == std::string::npos || ep.compare(0, scheme_end, "http") != 0) {
    throw std::invalid_argument("endpoint must be an http:// URL: '" + ep + "'");
  }
  std::size_t path_start = ep.find('/', scheme_end + 3);
  scheme_host_port_ = ep.substr(0, path_start);
  if (path_start != std::string::npos) {
    path_prefix_ = ep.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  }
}

std::string HttpBackend::describe() const { return "http(" + options_.endpoint + ")"; }

bool HttpBackend::healthy() const {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(std::chrono::milliseconds(options_.timeout_ms));
  client.set_read_timeout(std::chrono::milliseconds(options_.timeout_ms));
  auto res = client.Get(path_prefix_ + "/healthz");
  return res && res->status == 200;
}

GenerationResponse HttpBackend::generate(const GenerationRequest& request) {
  try {
    request.validate();
  } catch (const std::invalid_argument& e) {
    throw BackendError(BackendError::Kind::ProtocolError, request.request_id, e.what());
  }
  const std::string body = request_to_wire(request).dump();
  const std::string path = path_prefix_ + "/v1/generate";
  const auto timeout = std::chrono::milliseconds(options_.timeout_ms);

  Slot slot(*this);
  BackendError::Kind last_kind = BackendError::Kind::Unavailable;
  std::string last_message;
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    if (attempt > 0) {
      ++retries_;
      std::this_thread::sleep_for(std::chrono::milliseconds(options_.backoff_base_ms) * (1 << (attempt - 1)));
    }
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto started = std::chrono::steady_clock::now();
    auto res = client.Post(path, body, "application/json");
    auto elapsed = std::chrono::steady_clock::now() - started;
    if (!res) {
      bool timed_out = res.error() == httplib::Error::Read && elapsed >= timeout;
      last_kind = timed_out ? BackendError::Kind::Timeout : BackendError::Kind::Unavailable;
      last_message = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) {
      GenerationResponse resp = response_from_wire(res->body, request.request_id);
      resp.latency_ms = std::chrono::duration<double, std::milli>(elapsed).count();
      return resp;
    }
    if (res->status >= 500 || res->status == 429) {
      last_kind = BackendError::Kind::Unavailable;
      last_message = "HTTP " + std::to_string(res->status);
      continue;
    }
    throw BackendError(BackendError::Kind::ProtocolError, request.request_id,
                       "HTTP " + std::to_string(res->status) + ": " + res->body);
  }
  throw BackendError(last_kind, request.request_id,
                     last_message + " after " + std::to_string(options_.max_retries + 1) + " attempts");
}

}  // namespace adeqa::backend
