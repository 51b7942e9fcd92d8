// adeqa: corpus -> split -> prepare -> run -> evaluate.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 backend failure.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "adeqa/backend.hpp"
#include "adeqa/codec.hpp"
#include "adeqa/corpus.hpp"
#include "adeqa/eval.hpp"
#include "adeqa/pipeline.hpp"
#include "adeqa/text.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace adeqa;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kBackend = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BackendFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
}

std::string utc_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Manifest {
 public:
  Manifest(std::string command, int argc, char** argv) {
    doc_["command"] = std::move(command);
    auto& line = doc_["argv"] = nlohmann::ordered_json::array();
    for (int i = 0; i < argc; ++i) line.push_back(argv[i]);
    doc_["started_at"] = utc_now();
  }

  nlohmann::ordered_json& operator[](const char* key) { return doc_[key]; }

  void input(const fs::path& path, const std::string& content) {
    doc_["inputs"][path.string()] = text::hex64(text::fnv1a64(content));
  }

  void write(const fs::path& dir) {
    doc_["finished_at"] = utc_now();
    write_file(dir / "manifest.json", doc_.dump(2) + "\n");
  }

 private:
  nlohmann::ordered_json doc_;
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

std::vector<corpus::Example> load_examples(const fs::path& path, Manifest& manifest) {
  std::string content = read_file(path);
  manifest.input(path, content);
  std::istringstream in(content);
  return corpus::read_examples_jsonl(in);
}

codec::CodecConfig resolve_codec(const std::string& grammar, const std::string& templates, bool templates_given) {
  codec::CodecConfig cfg;
  if (auto g = codec::AnswerGrammar::preset(grammar)) {
    cfg.grammar = *g;
  } else if (fs::is_regular_file(grammar)) {
    std::ifstream in(grammar);
    cfg = codec::load_codec_config(in);
    if (!templates_given) return cfg;
  } else {
    throw UsageError("unknown grammar '" + grammar + "' (expected tagged, alternating or a config file)");
  }
  auto t = codec::QuestionTemplates::preset(templates);
  if (!t) throw UsageError("unknown templates '" + templates + "' (expected default or narrative)");
  cfg.templates = *t;
  return cfg;
}

nlohmann::ordered_json grammar_json(const codec::AnswerGrammar& g) {
  nlohmann::ordered_json j;
  j["name"] = g.name;
  j["start_token"] = g.start_token;
  j["next_token"] = g.next_token;
  j["ade_token"] = g.ade_token;
  j["suspect_token"] = g.suspect_token;
  j["no_suspect_token"] = g.no_suspect_token;
  j["pair_format"] = codec::pair_format_name(g.pair_format);
  return j;
}

nlohmann::ordered_json templates_json(const codec::QuestionTemplates& t) {
  nlohmann::ordered_json j;
  j["name"] = t.name;
  j["ade_list"] = t.ade_list;
  j["suspect_list"] = t.suspect_list;
  j["pair_confirm"] = t.pair_confirm;
  j["joint_pairs"] = t.joint_pairs;
  return j;
}

std::string histogram_csv(const std::map<std::size_t, std::size_t>& hist) {
  std::string out = "count,texts\n";
  for (const auto& [k, v] : hist) out += std::to_string(k) + "," + std::to_string(v) + "\n";
  return out;
}

// Options shared by prepare and run.
struct CodecFlags {
  int approach = 1;
  std::string grammar = "tagged";
  std::string templates = "default";
  bool no_suspect = false;
  std::uint32_t seed = 0;
  std::string set = "eval";
  CLI::Option* templates_opt = nullptr;

  void add(CLI::App* cmd) {
    cmd->add_option("--approach", approach, "1 (lists + confirmation) or 2 (joint pairs)")
        ->check(CLI::IsMember({1, 2}));
    cmd->add_option("--grammar", grammar, "tagged, alternating, or a key=value config file");
    templates_opt = cmd->add_option("--templates", templates, "default or narrative");
    cmd->add_flag("--no-suspect", no_suspect, "answer texts without pairs with the no-suspect sentinel");
    cmd->add_option("--seed", seed);
    cmd->add_option("--split", set, "which split file to read")->check(CLI::IsMember({"train", "eval"}));
  }

  pipeline::PipelineConfig config() const {
    auto codec_cfg = resolve_codec(grammar, templates, templates_opt->count() > 0);
    pipeline::PipelineConfig cfg;
    cfg.approach = approach;
    cfg.grammar = codec_cfg.grammar;
    cfg.templates = codec_cfg.templates;
    cfg.no_suspect_sentinel_enabled = no_suspect;
    cfg.seed = seed;
    return cfg;
  }

  void record(Manifest& m, const pipeline::PipelineConfig& cfg) const {
    m["seed"] = seed;
    m["split"] = set;
    m["approach"] = approach;
    m["no_suspect"] = no_suspect;
    m["grammar"] = grammar_json(cfg.grammar);
    m["templates"] = templates_json(cfg.templates);
  }
};

int cmd_stats(const std::string& corpus_path, const fs::path& out_dir, Manifest& m) {
  std::string content = read_file(corpus_path);
  m.input(corpus_path, content);
  std::istringstream in(content);
  auto records = corpus::parse_corpus(in);
  auto examples = corpus::group_examples(records);
  auto s = corpus::stats(examples, records);
  auto doc = corpus::stats_to_json(s);

  ensure_dir(out_dir);
  write_file(out_dir / "stats.json", doc.dump(2) + "\n");
  write_file(out_dir / "ades_per_text.csv", histogram_csv(s.ades_per_text_hist));
  write_file(out_dir / "suspects_per_text.csv", histogram_csv(s.suspects_per_text_hist));
  write_file(out_dir / "pairs_per_text.csv", histogram_csv(s.pairs_per_text_hist));
  m.write(out_dir);
  std::cout << doc.dump(2) << "\n";
  return kOk;
}

int cmd_split(const std::string& corpus_path, const corpus::SplitSpec& spec, const fs::path& out_dir, Manifest& m) {
  std::string content = read_file(corpus_path);
  m.input(corpus_path, content);
  std::istringstream in(content);
  auto records = corpus::parse_corpus(in);
  auto examples = corpus::group_examples(records);
  auto parts = corpus::split(examples, spec);

  ensure_dir(out_dir);
  std::ostringstream train, eval;
  corpus::write_examples_jsonl(train, parts.train);
  corpus::write_examples_jsonl(eval, parts.eval);
  write_file(out_dir / "train.jsonl", train.str());
  write_file(out_dir / "eval.jsonl", eval.str());
  m["seed"] = spec.seed;
  m["split"] = {{"train_size", spec.train_size}, {"seed", spec.seed}};
  m.write(out_dir);
  std::cerr << "split: " << parts.train.size() << " train, " << parts.eval.size() << " eval\n";
  return kOk;
}

int cmd_prepare(const fs::path& split_dir, const CodecFlags& flags, std::optional<double> negative_ratio,
                const fs::path& out_dir, Manifest& m) {
  auto cfg = flags.config();
  cfg.negative_ratio = negative_ratio;
  cfg.validate();
  auto examples = load_examples(split_dir / (flags.set + ".jsonl"), m);
  auto pairs = pipeline::prepare_training_pairs(examples, cfg);

  ensure_dir(out_dir);
  std::ostringstream out;
  pipeline::write_jsonl<pipeline::QAInstance>(out, pairs);
  write_file(out_dir / "pairs.jsonl", out.str());
  flags.record(m, cfg);
  m["negative_ratio"] = negative_ratio ? nlohmann::ordered_json(*negative_ratio) : nlohmann::ordered_json();
  m.write(out_dir);
  std::cerr << "prepare: " << pairs.size() << " instances from " << examples.size() << " texts\n";
  return kOk;
}

struct RunFlags {
  std::string backend = "mock";
  std::string endpoint;
  std::string gold;
  backend::NoiseConfig noise;
  std::size_t concurrency = 1;
  int timeout_ms = 30000;
  int max_retries = 3;
};

int cmd_run(const fs::path& split_dir, const CodecFlags& flags, const RunFlags& rf, const fs::path& out_dir,
            Manifest& m) {
  auto cfg = flags.config();
  cfg.concurrency_limit = rf.concurrency;
  cfg.validate();

  auto examples = load_examples(split_dir / (flags.set + ".jsonl"), m);
  auto texts = pipeline::texts_of(examples);

  std::unique_ptr<backend::Backend> be;
  nlohmann::ordered_json descriptor;
  descriptor["kind"] = rf.backend;
  if (rf.backend == "mock") {
    std::vector<corpus::Example> gold = rf.gold.empty() ? examples : load_examples(rf.gold, m);
    auto noise = rf.noise;
    noise.seed = flags.seed;
    noise.validate();
    be = std::make_unique<backend::MockBackend>(gold, noise,
                                                backend::MockOptions{cfg.grammar, cfg.templates, cfg.no_suspect_sentinel_enabled});
    descriptor["noise"] = {{"drop", noise.drop_prob},
                           {"spurious", noise.spurious_prob},
                           {"corrupt", noise.corrupt_prob},
                           {"flip", noise.flip_prob},
                           {"seed", noise.seed}};
  } else {
    if (rf.endpoint.empty()) throw UsageError("--endpoint or ADEQA_ENDPOINT is required for --backend http");
    backend::HttpOptions opts;
    opts.endpoint = rf.endpoint;
    opts.timeout_ms = rf.timeout_ms;
    opts.max_retries = rf.max_retries;
    opts.concurrency_limit = rf.concurrency;
    try {
      be = std::make_unique<backend::HttpBackend>(opts);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    descriptor["endpoint"] = rf.endpoint;
    descriptor["timeout_ms"] = rf.timeout_ms;
    descriptor["max_retries"] = rf.max_retries;
  }
  descriptor["describe"] = be->describe();

  auto result = pipeline::run(texts, *be, cfg);
  std::vector<pipeline::SkippedText> skipped = result.skipped;

  ensure_dir(out_dir);
  std::ostringstream preds, skips;
  pipeline::write_jsonl<pipeline::Prediction>(preds, result.predictions);
  write_file(out_dir / "predictions.jsonl", preds.str());

  std::size_t judged = 0;
  if (cfg.approach == 1 && !result.predictions.empty()) {
    // Relation judging over gold entities, for the confusion matrix.
    auto judge = pipeline::judge_relations(examples, *be, cfg);
    std::ostringstream js;
    pipeline::write_jsonl<pipeline::RePairJudgment>(js, judge.judgments);
    write_file(out_dir / "judgments.jsonl", js.str());
    judged = judge.judgments.size();
    for (auto& s : judge.skipped) {
      s.message = "judge: " + s.message;
      skipped.push_back(std::move(s));
    }
  }
  pipeline::write_jsonl<pipeline::SkippedText>(skips, skipped);
  write_file(out_dir / "skipped.jsonl", skips.str());

  flags.record(m, cfg);
  m["concurrency"] = rf.concurrency;
  m["backend"] = descriptor;
  m["counts"] = {{"texts", texts.size()},
                 {"predicted", result.predictions.size()},
                 {"skipped", result.skipped.size()},
                 {"judgments", judged}};
  m.write(out_dir);

  std::cerr << "run: " << texts.size() << " texts, " << result.predictions.size() << " predicted, "
            << result.skipped.size() << " skipped\n";
  for (const auto& s : result.skipped) std::cerr << "  skipped " << s.example_id << ": " << s.error_kind << ": " << s.message << "\n";
  if (!texts.empty() && result.predictions.empty()) throw BackendFailure("every text failed");
  return kOk;
}

struct EvalFlags {
  std::string predictions;
  std::string gold;
  std::string judgments;
  std::string match = "strict";
  double tau = 0.7;
  std::string format = "json";
  std::string out;
  std::string out_dir;
};

int cmd_evaluate(const EvalFlags& f, Manifest& m) {
  auto mode = eval::parse_match_mode(f.match, f.tau);
  if (!mode) throw UsageError("unknown match mode '" + f.match + "'");
  mode->validate();
  auto format = eval::parse_report_format(f.format);
  if (!format) throw UsageError("unsupported format '" + f.format + "'");

  auto gold = load_examples(f.gold, m);
  std::string pred_content = read_file(f.predictions);
  m.input(f.predictions, pred_content);
  std::istringstream pin(pred_content);
  auto preds = pipeline::read_predictions(pin);

  std::optional<std::vector<pipeline::RePairJudgment>> judgments;
  if (!f.judgments.empty()) {
    std::string content = read_file(f.judgments);
    m.input(f.judgments, content);
    std::istringstream jin(content);
    judgments = pipeline::read_judgments(jin);
  }
  auto report = judgments ? eval::evaluate(preds, gold, *mode, std::span<const pipeline::RePairJudgment>(*judgments))
                          : eval::evaluate(preds, gold, *mode, std::nullopt);
  std::string text = eval::emit_report(report, *format);

  if (!f.out.empty()) {
    write_file(f.out, text);
  } else if (f.out_dir.empty()) {
    std::cout << text;
  }
  if (!f.out_dir.empty()) {
    ensure_dir(f.out_dir);
    static const std::map<eval::ReportFormat, std::string> ext = {
        {eval::ReportFormat::Json, "json"}, {eval::ReportFormat::Csv, "csv"}, {eval::ReportFormat::Markdown, "md"}};
    write_file(fs::path(f.out_dir) / ("report." + ext.at(*format)), text);
    m["match"] = std::string(mode->name());
    m["tau"] = mode->tau;
    m["format"] = f.format;
    m.write(f.out_dir);
  }
  if (report.skipped_texts > 0) std::cerr << "evaluate: " << report.skipped_texts << " gold texts without prediction\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ADE/suspect extraction as question answering"};
  app.require_subcommand(1);

  std::string corpus_path, split_dir, out_dir;

  auto* stats = app.add_subcommand("stats", "corpus statistics and per-count histograms");
  stats->add_option("corpus", corpus_path)->required();
  stats->add_option("--out-dir", out_dir)->required();

  corpus::SplitSpec spec;
  auto* split = app.add_subcommand("split", "deterministic train/eval split");
  split->add_option("corpus", corpus_path)->required();
  split->add_option("--train-size", spec.train_size);
  split->add_option("--seed", spec.seed);
  split->add_option("--out-dir", out_dir)->required();

  CodecFlags prep_flags;
  std::optional<double> negative_ratio;
  auto* prepare = app.add_subcommand("prepare", "training question/answer pairs");
  prepare->add_option("split_dir", split_dir)->required();
  prep_flags.set = "train";
  prep_flags.add(prepare);
  prepare->add_option("--negative-ratio", negative_ratio, "negative confirmations per positive");
  prepare->add_option("--out-dir", out_dir)->required();

  CodecFlags run_flags;
  RunFlags rf;
  if (const char* env = std::getenv("ADEQA_ENDPOINT")) rf.endpoint = env;
  auto* run = app.add_subcommand("run", "extract with a generation backend");
  run->add_option("split_dir", split_dir)->required();
  run_flags.add(run);
  run->add_option("--backend", rf.backend)->check(CLI::IsMember({"mock", "http"}));
  run->add_option("--endpoint", rf.endpoint, "defaults to $ADEQA_ENDPOINT");
  run->add_option("--gold", rf.gold, "oracle examples for the mock (default: the input split)");
  run->add_option("--noise-drop", rf.noise.drop_prob);
  run->add_option("--noise-spurious", rf.noise.spurious_prob);
  run->add_option("--noise-corrupt", rf.noise.corrupt_prob);
  run->add_option("--noise-flip", rf.noise.flip_prob);
  run->add_option("--concurrency", rf.concurrency)->check(CLI::PositiveNumber);
  run->add_option("--timeout-ms", rf.timeout_ms)->check(CLI::PositiveNumber);
  run->add_option("--max-retries", rf.max_retries)->check(CLI::NonNegativeNumber);
  run->add_option("--out-dir", out_dir)->required();

  EvalFlags ef;
  auto* evaluate = app.add_subcommand("evaluate", "score predictions against gold");
  evaluate->add_option("--predictions", ef.predictions)->required();
  evaluate->add_option("--gold", ef.gold)->required();
  evaluate->add_option("--judgments", ef.judgments);
  evaluate->add_option("--match", ef.match);
  evaluate->add_option("--tau", ef.tau);
  evaluate->add_option("--format", ef.format, "json, csv or markdown");
  evaluate->add_option("--out", ef.out, "report file (default: stdout)");
  evaluate->add_option("--out-dir", ef.out_dir, "directory for report + manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  Manifest manifest(chosen->get_name(), argc, argv);
  try {
    if (chosen == stats) return cmd_stats(corpus_path, out_dir, manifest);
    if (chosen == split) return cmd_split(corpus_path, spec, out_dir, manifest);
    if (chosen == prepare) return cmd_prepare(split_dir, prep_flags, negative_ratio, out_dir, manifest);
    if (chosen == run) return cmd_run(split_dir, run_flags, rf, out_dir, manifest);
    return cmd_evaluate(ef, manifest);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const codec::CodecError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const corpus::CorpusError& e) {
    if (e.kind() == corpus::CorpusError::Kind::TrainSizeTooLarge || e.kind() == corpus::CorpusError::Kind::InvalidSplit) {
      std::cerr << "error: " << e.what() << "\n";
      return kUsage;
    }
    std::cerr << "data error";
    if (e.line_no() > 0) std::cerr << " at line " << e.line_no();
    std::cerr << ": " << e.what() << "\n";
    return kData;
  } catch (const eval::EvalError& e) {
    std::cerr << "evaluation error: " << e.what() << "\n";
    return e.kind() == eval::EvalError::Kind::BadMode || e.kind() == eval::EvalError::Kind::UnsupportedFormat ? kUsage
                                                                                                             : kData;
  } catch (const BackendFailure& e) {
    std::cerr << "backend failure: " << e.what() << "\n";
    return kBackend;
  } catch (const backend::BackendError& e) {
    std::cerr << "backend failure: " << e.what() << "\n";
    return kBackend;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
}
