#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <sstream>
#include <thread>

#include "adeqa/backend.hpp"
#include "support/test_server.hpp"

using namespace adeqa;
using backend::BackendError;
using backend::GenerationRequest;

namespace {

const std::string kSampleText = "Intravenous azithromycin-induced ototoxicity.";

std::vector<corpus::Example> gold_examples() {
  std::istringstream in(
      "10030778|Intravenous azithromycin-induced ototoxicity.|ototoxicity|43|54|azithromycin|22|34\n"
      "2|Fever and rash after amoxicillin and ibuprofen.|fever|0|5|amoxicillin|21|32\n"
      "2|Fever and rash after amoxicillin and ibuprofen.|rash|10|14|amoxicillin|21|32\n"
      "2|Fever and rash after amoxicillin and ibuprofen.|rash|10|14|ibuprofen|37|46\n");
  return corpus::group_examples(corpus::parse_corpus(in));
}

GenerationRequest req(std::string question, std::string context = kSampleText) {
  GenerationRequest r;
  r.question = std::move(question);
  r.context = std::move(context);
  r.request_id = "test";
  return r;
}

backend::MockBackend mock(backend::NoiseConfig noise = {}, backend::MockOptions opts = {}) {
  auto gold = gold_examples();
  return backend::MockBackend(gold, noise, std::move(opts));
}

}  // namespace

TEST_CASE("request validation and wire mapping") {
  GenerationRequest r = req("what are the ADEs?");
  CHECK_NOTHROW(r.validate());
  CHECK(backend::request_to_wire(r).dump() ==
        R"({"question":"what are the ADEs?","context":"Intravenous azithromycin-induced ototoxicity.","max_new_tokens":32,"repetition_penalty_disabled":true})");
  r.max_new_tokens = 0;
  CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  CHECK_THROWS_AS(req("").validate(), std::invalid_argument);
  CHECK_THROWS_AS(req("q", "").validate(), std::invalid_argument);

  CHECK(backend::response_from_wire(R"({"text":"<Start>x","extra":1})", "id").text == "<Start>x");
  CHECK(backend::response_from_wire(R"({"text":""})", "id").text.empty());
  for (const char* bad : {R"({"txt":"x"})", R"({"text":3})", "[1]", "not json"}) {
    try {
      backend::response_from_wire(bad, "rid-7");
      FAIL("expected protocol error");
    } catch (const BackendError& e) {
      CHECK(e.kind() == BackendError::Kind::ProtocolError);
      CHECK(e.request_id() == "rid-7");
    }
  }
}

TEST_CASE("zero-noise mock answers from gold") {
  auto m = mock();
  CHECK(m.generate(req("what are the ADEs?")).text == "<Start>ototoxicity");
  CHECK(m.generate(req("what are the suspects?")).text == "<Start>azithromycin");
  CHECK(m.generate(req("is ototoxicity caused by azithromycin?")).text == "Yes");
  CHECK(m.generate(req("is Ototoxicity  caused by azithromycin?")).text == "Yes");
  CHECK(m.generate(req("what are the ADEs and suspects?")).text == "<Start><ade>ototoxicity<suspect>azithromycin");

  const std::string multi = "Fever and rash after amoxicillin and ibuprofen.";
  CHECK(m.generate(req("is fever caused by ibuprofen?", multi)).text == "No");
  CHECK(m.generate(req("is rash caused by ibuprofen?", multi)).text == "Yes");
  CHECK(m.generate(req("what are the ADEs?", "  Fever and  rash after amoxicillin and ibuprofen. ")).text ==
        "<Start>fever<next>rash");
}

TEST_CASE("mock honours grammar, templates and sentinel options") {
  backend::MockOptions opts;
  opts.grammar = codec::AnswerGrammar::alternating();
  opts.templates = codec::QuestionTemplates::narrative();
  auto m = mock({}, opts);
  CHECK(m.generate(req("What are the ADEs and suspects?")).text == "<Start>ototoxicity<next>azithromycin");
  CHECK(m.generate(req("Was the ototoxicity caused by azithromycin?")).text == "Yes");

  backend::MockOptions sentinel;
  sentinel.no_suspect_sentinel = true;
  backend::NoiseConfig drop_all;
  drop_all.drop_prob = 1.0;
  auto s = mock(drop_all, sentinel);
  CHECK(s.generate(req("what are the ADEs and suspects?")).text == "no-suspect");
}

TEST_CASE("mock errors") {
  auto m = mock();
  try {
    m.generate(req("what are the ADEs?", "unseen text"));
    FAIL("expected UnknownContext");
  } catch (const BackendError& e) {
    CHECK(e.kind() == BackendError::Kind::UnknownContext);
    CHECK(e.request_id() == "test");
  }
  try {
    m.generate(req("how are you?"));
    FAIL("expected ProtocolError");
  } catch (const BackendError& e) {
    CHECK(e.kind() == BackendError::Kind::ProtocolError);
  }
  backend::NoiseConfig bad;
  bad.drop_prob = 1.5;
  CHECK_THROWS_AS(mock(bad), std::invalid_argument);
}

TEST_CASE("noise boundaries") {
  backend::NoiseConfig noise;
  noise.drop_prob = 1.0;
  auto dropped = mock(noise);
  CHECK(dropped.generate(req("what are the ADEs?")).text == "<Start>");
  CHECK(dropped.generate(req("what are the suspects?")).text == "<Start>");
  CHECK(dropped.generate(req("what are the ADEs and suspects?")).text == "<Start>");

  backend::NoiseConfig flip;
  flip.flip_prob = 1.0;
  auto flipped = mock(flip);
  CHECK(flipped.generate(req("is ototoxicity caused by azithromycin?")).text == "No");
  CHECK(flipped.generate(req("is ototoxicity caused by aspirin?")).text == "Yes");

  backend::NoiseConfig corrupt;
  corrupt.corrupt_prob = 1.0;
  std::string answer = mock(corrupt).generate(req("what are the ADEs?")).text;
  REQUIRE(answer.size() == std::string("<Start>ototoxicity").size());
  std::size_t diffs = 0;
  for (std::size_t i = 0; i < answer.size(); ++i) diffs += answer[i] != std::string("<Start>ototoxicity")[i];
  CHECK(diffs == 1);

  backend::NoiseConfig spurious;
  spurious.spurious_prob = 1.0;
  auto sp = codec::decode_entity_list(
      mock(spurious).generate(req("what are the ADEs?", "Fever and rash after amoxicillin and ibuprofen.")).text,
      codec::AnswerGrammar{});
  CHECK(sp.value.size() + sp.diagnostics.duplicates_removed == 3);
}

TEST_CASE("mock is deterministic per request content") {
  backend::NoiseConfig noise{0.5, 0.5, 0.5, 0.5, 17};
  auto a = mock(noise);
  auto b = mock(noise);
  const std::string ctx = "Fever and rash after amoxicillin and ibuprofen.";
  for (const char* q : {"what are the ADEs?", "what are the suspects?", "what are the ADEs and suspects?",
                        "is rash caused by ibuprofen?"}) {
    std::string first = a.generate(req(q, ctx)).text;
    CHECK(a.generate(req(q, ctx)).text == first);
    CHECK(b.generate(req(q, ctx)).text == first);
  }
  // Concurrent callers see the same answers.
  std::vector<std::string> seen(8);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < seen.size(); ++i) {
    threads.emplace_back([&, i] { seen[i] = a.generate(req("what are the ADEs and suspects?", ctx)).text; });
  }
  for (auto& t : threads) t.join();
  for (const auto& s : seen) CHECK(s == seen[0]);
}

TEST_CASE("http backend speaks the wire protocol") {
  testing::TestServer ts;
  std::atomic<int> calls{0};
  nlohmann::json last_body;
  std::mutex mu;
  ts.server().Post("/v1/generate", [&](const httplib::Request& rq, httplib::Response& rs) {
    ++calls;
    {
      std::lock_guard lock(mu);
      last_body = nlohmann::json::parse(rq.body);
    }
    rs.set_content(R"({"text":"<Start>ototoxicity"})", "application/json");
  });
  ts.server().Get("/healthz", [](const httplib::Request&, httplib::Response& rs) { rs.set_content("ok", "text/plain"); });
  ts.start();

  backend::HttpBackend http({ts.endpoint(), 2000, 3, 1, 2});
  CHECK(http.healthy());
  auto resp = http.generate(req("what are the ADEs?"));
  CHECK(resp.text == "<Start>ototoxicity");
  CHECK(resp.latency_ms >= 0.0);
  CHECK(calls == 1);
  CHECK(http.retries() == 0);
  std::lock_guard lock(mu);
  CHECK(last_body.size() == 4);
  CHECK(last_body["question"] == "what are the ADEs?");
  CHECK(last_body["context"] == kSampleText);
  CHECK(last_body["max_new_tokens"] == 32);
  CHECK(last_body["repetition_penalty_disabled"] == true);
}

TEST_CASE("http backend retries transient failures") {
  testing::TestServer ts;
  std::atomic<int> calls{0};
  ts.server().Post("/prefix/v1/generate", [&](const httplib::Request&, httplib::Response& rs) {
    if (calls++ == 0) {
      rs.status = 503;
      return;
    }
    rs.set_content(R"({"text":"Yes"})", "application/json");
  });
  ts.start();
  backend::HttpBackend http({ts.endpoint() + "/prefix/", 2000, 3, 1, 1});
  CHECK(http.generate(req("is a caused by b?")).text == "Yes");
  CHECK(calls == 2);
  CHECK(http.retries() == 1);
}

TEST_CASE("http backend error mapping") {
  testing::TestServer ts;
  std::atomic<int> bad_request_calls{0};
  ts.server().Post("/missing/v1/generate", [](const httplib::Request&, httplib::Response& rs) {
    rs.set_content(R"({"answer":"x"})", "application/json");
  });
  ts.server().Post("/reject/v1/generate", [&](const httplib::Request&, httplib::Response& rs) {
    ++bad_request_calls;
    rs.status = 400;
  });
  ts.server().Post("/down/v1/generate", [](const httplib::Request&, httplib::Response& rs) { rs.status = 503; });
  ts.server().Post("/slow/v1/generate", [](const httplib::Request&, httplib::Response& rs) {
    std::this_thread::sleep_for(std::chrono::milliseconds(400));
    rs.set_content(R"({"text":"late"})", "application/json");
  });
  ts.start();

  auto kind_of = [](backend::HttpBackend& b) {
    try {
      b.generate(req("q"));
    } catch (const BackendError& e) {
      CHECK(e.request_id() == "test");
      return e.kind();
    }
    FAIL("expected BackendError");
    return BackendError::Kind::Unavailable;
  };

  backend::HttpBackend missing({ts.endpoint() + "/missing", 2000, 3, 1, 1});
  CHECK(kind_of(missing) == BackendError::Kind::ProtocolError);

  backend::HttpBackend reject({ts.endpoint() + "/reject", 2000, 3, 1, 1});
  CHECK(kind_of(reject) == BackendError::Kind::ProtocolError);
  CHECK(bad_request_calls == 1);

  backend::HttpBackend down({ts.endpoint() + "/down", 2000, 2, 1, 1});
  CHECK(kind_of(down) == BackendError::Kind::Unavailable);
  CHECK(down.retries() == 2);

  backend::HttpBackend slow({ts.endpoint() + "/slow", 100, 0, 1, 1});
  CHECK(kind_of(slow) == BackendError::Kind::Timeout);

  backend::HttpBackend dead({"http://127.0.0.1:1", 500, 1, 1, 1});
  CHECK(kind_of(dead) == BackendError::Kind::Unavailable);
  CHECK_FALSE(dead.healthy());

  CHECK_THROWS_AS(backend::HttpBackend({"ftp://x", 100, 1, 1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(backend::HttpBackend({ts.endpoint(), 100, 1, 1, 0}), std::invalid_argument);
}

TEST_CASE("http backend bounds requests in flight") {
  testing::TestServer ts;
  std::atomic<int> active{0};
  std::atomic<int> peak{0};
  ts.server().new_task_queue = [] { return new httplib::ThreadPool(16); };
  ts.server().Post("/v1/generate", [&](const httplib::Request&, httplib::Response& rs) {
    int now = ++active;
    int p = peak.load();
    while (now > p && !peak.compare_exchange_weak(p, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    --active;
    rs.set_content(R"({"text":"No"})", "application/json");
  });
  ts.start();
  backend::HttpBackend http({ts.endpoint(), 2000, 0, 1, 3});
  std::vector<std::thread> threads;
  for (int i = 0; i < 12; ++i) threads.emplace_back([&] { CHECK(http.generate(req("q")).text == "No"); });
  for (auto& t : threads) t.join();
  CHECK(peak <= 3);
  CHECK(http.peak_in_flight() <= 3);
  CHECK(http.peak_in_flight() >= 2);
}
