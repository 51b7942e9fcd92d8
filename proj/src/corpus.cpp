#include "adeqa/corpus.hpp"

#include <charconv>
#include <random>
#include <set>
#include <unordered_map>

#include "adeqa/text.hpp"

namespace adeqa::corpus {

namespace {

std::int64_t parse_offset(std::string_view field, std::size_t line_no) {
  std::string_view f = text::trim(field);
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), value);
  if (f.empty() || ec != std::errc() || ptr != f.data() + f.size() || value < 0) {
    throw CorpusError(CorpusError::Kind::NonNumericOffset, line_no, 8,
                      "line " + std::to_string(line_no) + ": offset field '" + std::string(f) +
                          "' is not a non-negative integer");
  }
  return value;
}

std::string required_field(std::string_view field, std::size_t line_no, const char* name) {
  std::string_view f = text::trim(field);
  if (f.empty()) {
    throw CorpusError(CorpusError::Kind::EmptyField, line_no, 8,
                      "line " + std::to_string(line_no) + ": empty " + name + " field");
  }
  return std::string(f);
}

bool slice_equals(std::string_view text, std::int64_t begin, std::int64_t end, std::string_view surface) {
  if (begin < 0 || end <= begin || static_cast<std::size_t>(end) > text.size()) return false;
  return text.substr(static_cast<std::size_t>(begin), static_cast<std::size_t>(end - begin)) == surface;
}

// Uniform in [0, bound) by rejection; mt19937 output is fully specified, so
// the result is identical on every platform (std::uniform_int_distribution
// is not).
std::uint32_t bounded(std::mt19937& rng, std::uint32_t bound) {
  std::uint32_t limit = static_cast<std::uint32_t>((0x100000000ULL / bound) * bound - 1);
  while (true) {
    std::uint32_t x = static_cast<std::uint32_t>(rng());
    if (x <= limit) return x % bound;
  }
}

}  // namespace

RawRecord parse_record(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields = text::split(line, "|");
  if (fields.size() != 8) {
    throw CorpusError(CorpusError::Kind::MalformedRecord, line_no, fields.size(),
                      "line " + std::to_string(line_no) + ": expected 8 fields, found " +
                          std::to_string(fields.size()));
  }
  RawRecord r;
  r.pmid = required_field(fields[0], line_no, "pmid");
  r.text = required_field(fields[1], line_no, "text");
  r.ade = required_field(fields[2], line_no, "ade");
  r.ade_begin = parse_offset(fields[3], line_no);
  r.ade_end = parse_offset(fields[4], line_no);
  r.drug = required_field(fields[5], line_no, "drug");
  r.drug_begin = parse_offset(fields[6], line_no);
  r.drug_end = parse_offset(fields[7], line_no);
  if (r.ade_begin >= r.ade_end || r.drug_begin >= r.drug_end) {
    throw CorpusError(CorpusError::Kind::InvalidOffsetRange, line_no, 8,
                      "line " + std::to_string(line_no) + ": offset begin must be below end");
  }
  return r;
}

std::vector<RawRecord> parse_corpus(std::istream& in) {
  std::vector<RawRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    records.push_back(parse_record(line, line_no));
  }
  return records;
}

std::string serialize_record(const RawRecord& r) {
  return r.pmid + "|" + r.text + "|" + r.ade + "|" + std::to_string(r.ade_begin) + "|" +
         std::to_string(r.ade_end) + "|" + r.drug + "|" + std::to_string(r.drug_begin) + "|" +
         std::to_string(r.drug_end);
}

OffsetStatus validate_offsets(const RawRecord& r) {
  if (slice_equals(r.text, r.ade_begin, r.ade_end, r.ade) &&
      slice_equals(r.text, r.drug_begin, r.drug_end, r.drug)) {
    return OffsetStatus::Valid;
  }
  if (r.text.find(r.ade) != std::string::npos && r.text.find(r.drug) != std::string::npos) {
    return OffsetStatus::RecoveredBySearch;
  }
  return OffsetStatus::Failed;
}

std::string normalize_text(std::string_view t) { return text::collapse_whitespace(t); }

std::string example_id(std::string_view normalized_text) { return text::hex64(text::fnv1a64(normalized_text)); }

void project_pairs(Example& ex) {
  ex.gold_ades.clear();
  ex.gold_suspects.clear();
  for (const auto& p : ex.gold_pairs) {
    ex.gold_ades.push_back(p.ade);
    ex.gold_suspects.push_back(p.suspect);
  }
  codec::dedup_entities(ex.gold_ades);
  codec::dedup_entities(ex.gold_suspects);
}

std::vector<Example> group_examples(std::span<const RawRecord> records) {
  std::vector<Example> out;
  std::unordered_map<std::string, std::size_t> index;
  for (const RawRecord& r : records) {
    std::string key = normalize_text(r.text);
    auto [it, inserted] = index.try_emplace(key, out.size());
    if (inserted) {
      Example ex;
      ex.id = example_id(key);
      ex.text = key;
      out.push_back(std::move(ex));
    }
    Example& ex = out[it->second];
    if (std::find(ex.pmids.begin(), ex.pmids.end(), r.pmid) == ex.pmids.end()) ex.pmids.push_back(r.pmid);
    ex.gold_pairs.push_back({text::collapse_whitespace(r.ade), text::collapse_whitespace(r.drug)});
  }
  for (Example& ex : out) {
    codec::dedup_pairs(ex.gold_pairs);
    project_pairs(ex);
  }
  return out;
}

Split split(std::span<const Example> examples, const SplitSpec& spec) {
  if (spec.train_size == 0) {
    throw CorpusError(CorpusError::Kind::InvalidSplit, 0, 0, "train size must be positive");
  }
  if (spec.train_size >= examples.size()) {
    throw CorpusError(CorpusError::Kind::TrainSizeTooLarge, 0, 0,
                      "train size " + std::to_string(spec.train_size) + " must be below the " +
                          std::to_string(examples.size()) + " available examples");
  }
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937 rng(spec.seed);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::size_t j = bounded(rng, static_cast<std::uint32_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  Split result;
  result.train.reserve(spec.train_size);
  result.eval.reserve(examples.size() - spec.train_size);
  for (std::size_t k = 0; k < order.size(); ++k) {
    (k < spec.train_size ? result.train : result.eval).push_back(examples[order[k]]);
  }
  return result;
}

CorpusStats stats(std::span<const Example> examples, std::span<const RawRecord> records) {
  CorpusStats s;
  s.num_texts = examples.size();
  s.num_records = records.size();
  std::set<std::string> ades;
  std::set<std::string> suspects;
  std::size_t multi = 0;
  for (const Example& ex : examples) {
    ++s.ades_per_text_hist[ex.gold_ades.size()];
    ++s.suspects_per_text_hist[ex.gold_suspects.size()];
    ++s.pairs_per_text_hist[ex.gold_pairs.size()];
    for (const auto& a : ex.gold_ades) ades.insert(codec::normalize_entity(a));
    for (const auto& d : ex.gold_suspects) suspects.insert(codec::normalize_entity(d));
    if (ex.gold_ades.size() > 1 || ex.gold_suspects.size() > 1) ++multi;
  }
  s.num_unique_ades = ades.size();
  s.num_unique_suspects = suspects.size();
  s.pct_multi_entity = examples.empty() ? 0.0 : static_cast<double>(multi) / static_cast<double>(examples.size());
  for (const RawRecord& r : records) {
    switch (validate_offsets(r)) {
      case OffsetStatus::Valid: ++s.offset_valid; break;
      case OffsetStatus::RecoveredBySearch: ++s.offset_recovered; break;
      case OffsetStatus::Failed: ++s.offset_failed; break;
    }
  }
  return s;
}

}  // namespace adeqa::corpus

namespace adeqa::corpus {

void to_json(nlohmann::json& j, const Example& ex) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : ex.gold_pairs) pairs.push_back({p.ade, p.suspect});
  j = nlohmann::json{{"id", ex.id}, {"pmids", ex.pmids}, {"text", ex.text}, {"pairs", pairs}};
}

void from_json(const nlohmann::json& j, Example& ex) {
  ex.id = j.at("id").get<std::string>();
  ex.pmids = j.at("pmids").get<std::vector<std::string>>();
  ex.text = j.at("text").get<std::string>();
  ex.gold_pairs.clear();
  for (const auto& p : j.at("pairs")) {
    if (!p.is_array() || p.size() != 2) throw nlohmann::json::type_error::create(302, "pair must be [ade, suspect]", &p);
    ex.gold_pairs.push_back({p[0].get<std::string>(), p[1].get<std::string>()});
  }
  project_pairs(ex);
}

nlohmann::ordered_json stats_to_json(const CorpusStats& s) {
  auto hist = [](const std::map<std::size_t, std::size_t>& h) {
    nlohmann::ordered_json o = nlohmann::ordered_json::object();
    for (const auto& [k, v] : h) o[std::to_string(k)] = v;
    return o;
  };
  nlohmann::ordered_json o;
  o["num_texts"] = s.num_texts;
  o["num_records"] = s.num_records;
  o["ades_per_text_hist"] = hist(s.ades_per_text_hist);
  o["suspects_per_text_hist"] = hist(s.suspects_per_text_hist);
  o["pairs_per_text_hist"] = hist(s.pairs_per_text_hist);
  o["num_unique_ades"] = s.num_unique_ades;
  o["num_unique_suspects"] = s.num_unique_suspects;
  o["pct_multi_entity"] = s.pct_multi_entity;
  o["offset_valid"] = s.offset_valid;
  o["offset_recovered"] = s.offset_recovered;
  o["offset_failed"] = s.offset_failed;
  return o;
}

void write_examples_jsonl(std::ostream& out, std::span<const Example> examples) {
  for (const Example& ex : examples) {
    nlohmann::ordered_json j;
    j["id"] = ex.id;
    j["pmids"] = ex.pmids;
    j["text"] = ex.text;
    j["pairs"] = nlohmann::ordered_json::array();
    for (const auto& p : ex.gold_pairs) j["pairs"].push_back({p.ade, p.suspect});
    out << j.dump() << '\n';
  }
}

std::vector<Example> read_examples_jsonl(std::istream& in) {
  std::vector<Example> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<Example>());
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError(CorpusError::Kind::MalformedRecord, line_no, 0,
                        "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace adeqa::corpus
