// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "adeqa/backend.hpp"
#include "adeqa/codec.hpp"
#include "adeqa/corpus.hpp"
#include "adeqa/eval.hpp"
#include "adeqa/pipeline.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace adeqa;
using Clock = std::chrono::steady_clock;

namespace {

const std::string kSampleRow =
    "10030778|Intravenous azithromycin-induced ototoxicity.|ototoxicity|43|54|azithromycin|22|34";

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 3) {
  std::ostringstream ss;
  ss.precision(digits);
  ss << std::fixed << v;
  return ss.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Synthetic corpus in the pipe-delimited format with exact offsets. Texts
// mention one or two ADEs and one or two drugs; not every ADE x drug
// combination is a gold pair, so relation judging sees negatives.
std::string synthetic_corpus(std::size_t n_texts, std::uint32_t seed) {
  static const std::vector<std::string> ades = {
      "severe fever",    "fever",          "nausea",        "skin rash",         "acute hepatitis",
      "hepatotoxicity",  "neutropenia",    "lactic acidosis", "ototoxicity",     "renal failure",
      "acute renal failure", "angioedema", "seizures",      "pancreatitis",      "tardive dyskinesia",
      "hyperkalemia",    "agranulocytosis", "cardiomyopathy", "interstitial nephritis", "hypoglycemia"};
  static const std::vector<std::string> drugs = {
      "metformin",  "azithromycin", "isoniazid", "lithium",   "carboplatin", "paclitaxel", "simvastatin",
      "warfarin",   "clozapine",    "cisplatin", "vancomycin", "lisinopril", "gentamicin", "lamotrigine",
      "valproate",  "tramadol",     "glyburide", "omeprazole", "amiodarone", "tylenol"};
  std::mt19937 rng(seed);
  std::ostringstream out;
  for (std::size_t i = 0; i < n_texts; ++i) {
    std::vector<std::string> a, d;
    std::size_t na = 1 + rng() % 2, nd = 1 + rng() % 2;
    while (a.size() < na) {
      const auto& x = ades[rng() % ades.size()];
      if (std::find(a.begin(), a.end(), x) == a.end()) a.push_back(x);
    }
    while (d.size() < nd) {
      const auto& x = drugs[rng() % drugs.size()];
      if (std::find(d.begin(), d.end(), x) == d.end()) d.push_back(x);
    }
    std::string text = "Case " + std::to_string(i) + ": " + a[0];
    std::vector<std::size_t> a_at = {text.size() - a[0].size()};
    if (na == 2) {
      text += " and ";
      a_at.push_back(text.size());
      text += a[1];
    }
    text += " after ";
    std::vector<std::size_t> d_at = {text.size()};
    text += d[0];
    if (nd == 2) {
      text += " with ";
      d_at.push_back(text.size());
      text += d[1];
    }
    text += ".";
    // Every ADE gets at least one drug; the second combination is kept at random.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t ai = 0; ai < na; ++ai) {
      std::size_t first = ai % nd;
      pairs.push_back({ai, first});
      if (nd == 2 && rng() % 3 == 0) pairs.push_back({ai, 1 - first});
    }
    for (auto [ai, di] : pairs) {
      out << (20000000 + i) << '|' << text << '|' << a[ai] << '|' << a_at[ai] << '|' << a_at[ai] + a[ai].size() << '|'
          << d[di] << '|' << d_at[di] << '|' << d_at[di] + d[di].size() << '\n';
    }
  }
  return out.str();
}

std::vector<corpus::Example> examples_of(const std::string& rows) {
  std::istringstream in(rows);
  return corpus::group_examples(corpus::parse_corpus(in));
}

eval::EvalReport evaluate_run(const std::vector<corpus::Example>& gold, const pipeline::PipelineConfig& cfg,
                              const backend::NoiseConfig& noise, const eval::MatchMode& mode,
                              bool with_judgments, Outcome& o) {
  backend::MockBackend mock(gold, noise, backend::MockOptions{cfg.grammar, cfg.templates, cfg.no_suspect_sentinel_enabled});
  auto texts = pipeline::texts_of(gold);
  auto result = pipeline::run(texts, mock, cfg);
  o.require(result.skipped.empty(), "mock skipped texts");
  if (!with_judgments) return eval::evaluate(result.predictions, gold, mode, std::nullopt);
  auto judged = pipeline::judge_relations(gold, mock, cfg);
  o.require(judged.skipped.empty(), "judge skipped texts");
  return eval::evaluate(result.predictions, gold, mode, std::span<const pipeline::RePairJudgment>(judged.judgments));
}

int run_cli(const std::string& args) {
  std::string cmd = std::string("\"") + ADEQA_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 1
Outcome corpus_fidelity() {
  Outcome o;
  fs::path full;
  if (const char* env = std::getenv("ADEQA_DRUG_AE_PATH")) full = env;
  else if (fs::exists(fs::path(ADEQA_TEST_DATA) / "DRUG-AE.rel")) full = fs::path(ADEQA_TEST_DATA) / "DRUG-AE.rel";

  auto t0 = Clock::now();
  if (!full.empty()) {
    std::ifstream in(full);
    o.require(bool(in), "cannot open " + full.string());
    auto records = corpus::parse_corpus(in);
    auto examples = corpus::group_examples(records);
    auto s = corpus::stats(examples, records);
    double secs = seconds_since(t0);
    auto near = [](double got, double want) { return std::abs(got - want) <= 0.02 * want; };
    o.require(near(double(s.num_texts), 6821), "num_texts " + std::to_string(s.num_texts));
    o.require(near(double(s.num_unique_ades), 2984), "unique ADEs " + std::to_string(s.num_unique_ades));
    o.require(near(double(s.num_unique_suspects), 1050), "unique suspects " + std::to_string(s.num_unique_suspects));
    o.require(near(s.pct_multi_entity, 0.20), "multi-entity fraction " + fmt(s.pct_multi_entity));
    o.require(secs < 5.0, "took " + fmt(secs) + " s");
    if (o.pass) {
      o.detail = "full corpus: " + std::to_string(s.num_texts) + " texts, " + std::to_string(s.num_unique_ades) +
                 " ADEs, " + std::to_string(s.num_unique_suspects) + " suspects, multi " + fmt(s.pct_multi_entity) +
                 ", " + fmt(secs) + " s";
    }
    return o;
  }

  std::ifstream in(fs::path(ADEQA_TEST_DATA) / "drug_ae_excerpt.rel");
  std::vector<corpus::RawRecord> records;
  try {
    records = corpus::parse_corpus(in);
  } catch (const corpus::CorpusError& e) {
    o.require(false, std::string("malformed record: ") + e.what());
    return o;
  }
  double secs = seconds_since(t0);
  o.require(records.size() == 50, "expected 50 records, got " + std::to_string(records.size()));
  bool has_sample = std::any_of(records.begin(), records.end(),
                                [](const corpus::RawRecord& r) { return r == corpus::parse_record(kSampleRow, 1); });
  o.require(has_sample, "sample row missing from excerpt");
  o.require(secs < 5.0, "took " + fmt(secs) + " s");
  if (o.pass) o.detail = "corpus file not available; 50-line excerpt parsed with 0 malformed records";
  return o;
}

// 2
Outcome codec_round_trips() {
  Outcome o;
  static const std::vector<std::string> words = {"fever", "Severe", "rash", "5-FU", "acute", "renal", "failure",
                                                 "Metformin", "(IV)", "x", "drug's", "3mg/kg", "next", "ade", "Start"};
  std::mt19937 rng(2024);
  auto surface = [&] {
    std::string s = words[rng() % words.size()];
    for (std::size_t k = rng() % 3; k > 0; --k) s += " " + words[rng() % words.size()];
    return s;
  };
  auto t0 = Clock::now();
  std::size_t checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    for (auto g : {codec::AnswerGrammar::tagged(), codec::AnswerGrammar::alternating()}) {
      std::vector<std::string> ents;
      std::set<std::string> seen;
      std::size_t n = rng() % 9;
      while (ents.size() < n) {
        auto s = surface();
        if (seen.insert(codec::normalize_entity(s)).second) ents.push_back(s);
      }
      auto de = codec::decode_entity_list(codec::encode_entity_list(ents, g), g);
      o.require(de.value == ents && !de.diagnostics.malformed(), "entity list round trip, trial " + std::to_string(trial));

      std::vector<codec::EntityPair> pairs;
      std::set<std::pair<std::string, std::string>> seen_pairs;
      std::size_t m = rng() % 9;
      while (pairs.size() < m) {
        codec::EntityPair p{surface(), surface()};
        if (seen_pairs.insert({codec::normalize_entity(p.ade), codec::normalize_entity(p.suspect)}).second) pairs.push_back(p);
      }
      auto dp = codec::decode_pair_list(codec::encode_pair_list(pairs, g, g.pair_format), g, g.pair_format);
      o.require(dp.value == pairs && !dp.diagnostics.malformed(),
                "pair list round trip (" + std::string(codec::pair_format_name(g.pair_format)) + "), trial " +
                    std::to_string(trial));
      checked += 2;
    }
  }
  double secs = seconds_since(t0);
  o.require(secs < 1.0, "took " + fmt(secs) + " s");
  if (o.pass) o.detail = std::to_string(checked) + " round trips, tagged + alternating, " + fmt(secs) + " s";
  return o;
}

// 3
Outcome oracle_closure() {
  Outcome o;
  auto t0 = Clock::now();
  auto examples = examples_of(synthetic_corpus(600, 7));
  auto parts = corpus::split(examples, {examples.size() - 200, 11});
  o.require(parts.eval.size() == 200, "eval split has " + std::to_string(parts.eval.size()) + " examples");

  std::size_t negatives = 0;
  for (int approach : {1, 2}) {
    pipeline::PipelineConfig cfg;
    cfg.approach = approach;
    cfg.concurrency_limit = 4;
    for (auto mode : {eval::MatchMode::strict(), eval::MatchMode::partial(0.7)}) {
      auto report = evaluate_run(parts.eval, cfg, {}, mode, approach == 1, o);
      for (const auto& [kind, s] : report.per_kind) {
        o.require(s.f1 == 1.0, "approach " + std::to_string(approach) + " " + std::string(mode.name()) + " " + kind +
                                   " F1 " + fmt(s.f1, 6));
      }
      if (approach == 1) {
        o.require(report.confusion && report.confusion->diagonal(), "relation confusion not diagonal");
        if (report.confusion) negatives = report.confusion->gold_no_pred_no;
      }
    }
  }
  o.require(negatives > 0, "no negative candidates exercised");
  double secs = seconds_since(t0);
  o.require(secs < 10.0, "took " + fmt(secs) + " s");
  if (o.pass) {
    o.detail = "200 texts, approaches 1+2, strict+partial F1 = 1.0; confusion diagonal (" + std::to_string(negatives) +
               " true negatives); " + fmt(secs) + " s";
  }
  return o;
}

// 4
Outcome matching_oracle() {
  Outcome o;
  static const std::vector<std::string> vocab = {"fever", "severe fever", "high fever", "feve", "nausea", "nausa",
                                                 "skin rash", "rash", "hepatitis", "acute hepatitis", "renal failure",
                                                 "acute renal failure"};
  std::mt19937 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> preds(rng() % 5), golds(rng() % 5);
    for (auto& s : preds) s = vocab[rng() % vocab.size()];
    for (auto& s : golds) s = vocab[rng() % vocab.size()];
    for (auto mode : {eval::MatchMode::strict(), eval::MatchMode::partial(0.7)}) {
      auto c = eval::assign_matches(preds, golds, mode);
      auto best = testing::brute_force_max_matching(preds.size(), golds.size(), [&](std::size_t i, std::size_t j) {
        return eval::entity_match(preds[i], golds[j], mode);
      });
      o.require(c.tp == best, "trial " + std::to_string(trial) + " " + std::string(mode.name()) + ": tp " +
                                  std::to_string(c.tp) + " vs " + std::to_string(best));
    }
  }
  if (o.pass) o.detail = "100 instances, strict + partial, tp equals brute-force maximum";
  return o;
}

// 5
Outcome fixtures() {
  Outcome o;
  o.require(eval::entity_match("severe fever", "fever", eval::MatchMode::partial(0.7)), "partial should match");
  o.require(!eval::entity_match("severe fever", "fever", eval::MatchMode::strict()), "strict should not match");
  o.require(testing::reference_levenshtein("fever", "severe fever") == 7, "reference DP distance");
  o.require(eval::levenshtein("fever", "severe fever") == 7, "levenshtein distance");
  auto r = corpus::parse_record(kSampleRow, 1);
  o.require(r.pmid == "10030778" && r.text == "Intravenous azithromycin-induced ototoxicity." && r.ade == "ototoxicity" &&
                r.ade_begin == 43 && r.ade_end == 54 && r.drug == "azithromycin" && r.drug_begin == 22 &&
                r.drug_end == 34,
            "sample row fields");
  if (o.pass) o.detail = "adjective variant, distance 7, sample row fields";
  return o;
}

// 6
Outcome noise_laws() {
  Outcome o;
  auto examples = examples_of(synthetic_corpus(300, 3));
  pipeline::PipelineConfig cfg;
  cfg.concurrency_limit = 4;
  double prev = 2.0;
  std::string trace;
  for (double drop : {0.0, 0.3, 0.6, 1.0}) {
    backend::NoiseConfig noise;
    noise.drop_prob = drop;
    noise.seed = 1234;
    auto strict = evaluate_run(examples, cfg, noise, eval::MatchMode::strict(), false, o);
    auto partial = evaluate_run(examples, cfg, noise, eval::MatchMode::partial(0.7), false, o);
    double recall = strict.per_kind.at(std::string(eval::kAde)).recall;
    o.require(recall <= prev, "ADE recall rose at drop " + fmt(drop, 1));
    prev = recall;
    for (const auto& [kind, s] : strict.per_kind) {
      o.require(partial.per_kind.at(kind).f1 >= s.f1, kind + " partial F1 below strict at drop " + fmt(drop, 1));
    }
    if (drop == 1.0) o.require(recall == 0.0, "ADE recall at drop 1 is " + fmt(recall));
    trace += (trace.empty() ? "" : ", ") + fmt(drop, 1) + "->" + fmt(recall);
  }
  if (o.pass) o.detail = "ADE recall " + trace + "; partial >= strict throughout";
  return o;
}

// 7
Outcome determinism() {
  Outcome o;
  fs::path dir = fs::temp_directory_path() / ("adeqa_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "corpus.rel") << synthetic_corpus(260, 5);
  auto q = [](const fs::path& p) { return "\"" + p.string() + "\""; };

  for (const char* name : {"s1", "s2"}) {
    o.require(run_cli("split " + q(dir / "corpus.rel") + " --train-size 60 --seed 17 --out-dir " + q(dir / name)) == 0,
              "split failed");
  }
  for (const char* f : {"train.jsonl", "eval.jsonl"}) {
    o.require(!slurp(dir / "s1" / f).empty() && slurp(dir / "s1" / f) == slurp(dir / "s2" / f), std::string(f) + " differs");
  }
  std::size_t compared = 0;
  for (int approach : {1, 2}) {
    std::vector<fs::path> outs;
    for (int conc : {1, 1, 8}) {
      fs::path out = dir / ("run" + std::to_string(approach) + "_" + std::to_string(outs.size()));
      int rc = run_cli("run " + q(dir / "s1") + " --approach " + std::to_string(approach) +
                       " --backend mock --noise-drop 0.2 --noise-spurious 0.2 --noise-corrupt 0.1 --noise-flip 0.1"
                       " --seed 5 --concurrency " + std::to_string(conc) + " --out-dir " + q(out));
      o.require(rc == 0, "run exited " + std::to_string(rc));
      outs.push_back(out);
    }
    for (const char* f : {"predictions.jsonl", "skipped.jsonl", "judgments.jsonl"}) {
      if (approach == 2 && std::string(f) == "judgments.jsonl") continue;
      std::string base = slurp(outs[0] / f);
      o.require(approach == 2 || std::string(f) == "skipped.jsonl" || !base.empty(), std::string(f) + " empty");
      for (std::size_t k = 1; k < outs.size(); ++k) {
        o.require(slurp(outs[k] / f) == base, std::string(f) + " differs (approach " + std::to_string(approach) + ")");
        ++compared;
      }
    }
  }
  fs::remove_all(dir);
  if (o.pass) o.detail = "split x2 identical; run identical across reruns and --concurrency 1/8 (" +
                         std::to_string(compared) + " file comparisons)";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"corpus fidelity", corpus_fidelity},     {"codec round trips", codec_round_trips},
      {"oracle closure", oracle_closure},       {"matching oracle equivalence", matching_oracle},
      {"reference fixtures", fixtures},         {"metric laws under noise", noise_laws},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << ": " << o.detail << "\n";
    if (!o.pass) ++failed;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
