#include <algorithm>
#include <random>
#include <set>

#include "adeqa/backend.hpp"
#include "adeqa/text.hpp"

namespace adeqa::backend {

namespace {

class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed) : rng_(seed) {}
  // Uniform in [0, 1) from the top 53 bits; mt19937_64 output is
  // specified by the standard, so this is reproducible everywhere.
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 rng_;
};

std::size_t rng_index(double u, std::size_t n) { return std::min(n - 1, static_cast<std::size_t>(u * n)); }

bool is_ascii_letter(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

// One-character substitution on an ASCII letter; appends a letter when the
// surface has none.
std::string corrupt(const std::string& s, double u_pos, double u_char) {
  std::vector<std::size_t> letters;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (is_ascii_letter(s[i])) letters.push_back(i);
  }
  char replacement = static_cast<char>('a' + std::min<int>(25, static_cast<int>(u_char * 26)));
  std::string out = s;
  if (letters.empty()) {
    out.push_back(replacement);
    return out;
  }
  std::size_t at = letters[std::min(letters.size() - 1, static_cast<std::size_t>(u_pos * letters.size()))];
  char lower = static_cast<char>(out[at] | 0x20);
  if (lower == replacement) replacement = replacement == 'z' ? 'a' : static_cast<char>(replacement + 1);
  out[at] = replacement;
  return out;
}

}  // namespace

MockBackend::MockBackend(std::span<const corpus::Example> gold, NoiseConfig noise, MockOptions options)
    : gold_(gold.begin(), gold.end()), noise_(noise), options_(std::move(options)) {
  noise_.validate();
  options_.grammar.validate();
  options_.templates.validate();
  std::set<std::string> seen_ades;
  std::set<std::string> seen_suspects;
  for (std::size_t i = 0; i < gold_.size(); ++i) {
    index_.try_emplace(corpus::normalize_text(gold_[i].text), i);
    for (const auto& a : gold_[i].gold_ades) {
      if (seen_ades.insert(codec::normalize_entity(a)).second) ade_vocabulary_.push_back(a);
    }
    for (const auto& s : gold_[i].gold_suspects) {
      if (seen_suspects.insert(codec::normalize_entity(s)).second) suspect_vocabulary_.push_back(s);
    }
  }
}

std::string MockBackend::describe() const {
  return "mock(drop=" + std::to_string(noise_.drop_prob) + ",spurious=" + std::to_string(noise_.spurious_prob) +
         ",corrupt=" + std::to_string(noise_.corrupt_prob) + ",flip=" + std::to_string(noise_.flip_prob) +
         ",seed=" + std::to_string(noise_.seed) + ")";
}

const corpus::Example& MockBackend::lookup(const GenerationRequest& request) const {
  auto it = index_.find(corpus::normalize_text(request.context));
  if (it == index_.end()) {
    throw BackendError(BackendError::Kind::UnknownContext, request.request_id, "context is not in the gold index");
  }
  return gold_[it->second];
}

std::vector<std::string> MockBackend::noisy_entities(const std::vector<std::string>& gold,
                                                     const std::vector<std::string>& vocabulary,
                                                     std::uint64_t stream) const {
  NoiseStream rng(stream);
  std::vector<std::string> out;
  // Draws happen unconditionally so the same entity sees the same numbers at
  // every noise level; raising drop_prob can only remove entities.
  for (const std::string& e : gold) {
    double u_drop = rng.uniform();
    double u_corrupt = rng.uniform();
    double u_pos = rng.uniform();
    double u_char = rng.uniform();
    if (u_drop < noise_.drop_prob) continue;
    out.push_back(u_corrupt < noise_.corrupt_prob ? corrupt(e, u_pos, u_char) : e);
  }
  double u_spurious = rng.uniform();
  double u_pick = rng.uniform();
  double u_where = rng.uniform();
  if (u_spurious < noise_.spurious_prob && !vocabulary.empty()) {
    std::size_t which = rng_index(u_pick, vocabulary.size());
    std::size_t where = std::min(out.size(), static_cast<std::size_t>(u_where * (out.size() + 1)));
    out.insert(out.begin() + static_cast<std::ptrdiff_t>(where), vocabulary[which]);
  }
  return out;
}

std::vector<codec::EntityPair> MockBackend::noisy_pairs(const std::vector<codec::EntityPair>& gold,
                                                        std::uint64_t stream) const {
  NoiseStream rng(stream);
  std::vector<codec::EntityPair> out;
  for (const auto& p : gold) {
    double u_drop = rng.uniform();
    double u_corrupt = rng.uniform();
    double u_side = rng.uniform();
    double u_pos = rng.uniform();
    double u_char = rng.uniform();
    if (u_drop < noise_.drop_prob) continue;
    codec::EntityPair q = p;
    if (u_corrupt < noise_.corrupt_prob) {
      std::string& side = u_side < 0.5 ? q.ade : q.suspect;
      side = corrupt(side, u_pos, u_char);
    }
    out.push_back(std::move(q));
  }
  double u_spurious = rng.uniform();
  double u_ade = rng.uniform();
  double u_suspect = rng.uniform();
  double u_where = rng.uniform();
  if (u_spurious < noise_.spurious_prob && !ade_vocabulary_.empty() && !suspect_vocabulary_.empty()) {
    codec::EntityPair extra{ade_vocabulary_[rng_index(u_ade, ade_vocabulary_.size())],
                            suspect_vocabulary_[rng_index(u_suspect, suspect_vocabulary_.size())]};
    std::size_t where = std::min(out.size(), static_cast<std::size_t>(u_where * (out.size() + 1)));
    out.insert(out.begin() + static_cast<std::ptrdiff_t>(where), std::move(extra));
  }
  return out;
}

bool MockBackend::confirm(const corpus::Example& ex, const GenerationRequest& request) const {
  std::vector<codec::EntityPair> candidates = codec::parse_pair_question(options_.templates, request.question);
  if (candidates.empty()) {
    throw BackendError(BackendError::Kind::ProtocolError, request.request_id,
                       "unrecognized question: " + request.question);
  }
  for (const auto& c : candidates) {
    std::string a = codec::normalize_entity(c.ade);
    std::string s = codec::normalize_entity(c.suspect);
    for (const auto& g : ex.gold_pairs) {
      if (codec::normalize_entity(g.ade) == a && codec::normalize_entity(g.suspect) == s) return true;
    }
  }
  return false;
}

GenerationResponse MockBackend::generate(const GenerationRequest& request) {
  auto started = std::chrono::steady_clock::now();
  try {
    request.validate();
  } catch (const std::invalid_argument& e) {
    throw BackendError(BackendError::Kind::ProtocolError, request.request_id, e.what());
  }
  const corpus::Example& ex = lookup(request);

  std::uint64_t stream = text::fnv1a64(std::to_string(noise_.seed));
  stream = text::fnv1a64(request.question, stream);
  stream = text::fnv1a64("\x1f", stream);
  stream = text::fnv1a64(corpus::normalize_text(request.context), stream);

  const auto& t = options_.templates;
  const auto& g = options_.grammar;
  GenerationResponse resp;
  if (request.question == t.ade_list) {
    resp.text = codec::encode_entity_list(noisy_entities(ex.gold_ades, ade_vocabulary_, stream), g);
  } else if (request.question == t.suspect_list) {
    resp.text = codec::encode_entity_list(noisy_entities(ex.gold_suspects, suspect_vocabulary_, stream), g);
  } else if (request.question == t.joint_pairs) {
    auto pairs = noisy_pairs(ex.gold_pairs, stream);
    resp.text = pairs.empty() && options_.no_suspect_sentinel ? codec::encode_no_suspect(g)
                                                              : codec::encode_pair_list(pairs, g, g.pair_format);
  } else {
    bool answer = confirm(ex, request);
    if (NoiseStream(stream).uniform() < noise_.flip_prob) answer = !answer;
    resp.text = codec::encode_bool(answer);
  }
  resp.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return resp;
}

}  // namespace adeqa::backend
