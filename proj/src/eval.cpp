#include "adeqa/eval.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <unordered_map>

#include "adeqa/text.hpp"

namespace adeqa::eval {

namespace {

struct Candidate {
  double score;
  std::size_t pred;
  std::size_t gold;
};

template <typename Score>
Counts greedy_assign(std::size_t n_pred, std::size_t n_gold, Score score) {
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < n_pred; ++i) {
    for (std::size_t j = 0; j < n_gold; ++j) {
      if (auto s = score(i, j)) cands.push_back({*s, i, j});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.pred != b.pred) return a.pred < b.pred;
    return a.gold < b.gold;
  });
  std::vector<std::optional<std::size_t>> gold_of(n_pred);
  std::vector<std::optional<std::size_t>> pred_of(n_gold);
  std::vector<std::vector<std::size_t>> adjacency(n_pred);
  for (const Candidate& cand : cands) {
    adjacency[cand.pred].push_back(cand.gold);
    if (gold_of[cand.pred] || pred_of[cand.gold]) continue;
    gold_of[cand.pred] = cand.gold;
    pred_of[cand.gold] = cand.pred;
  }
  // Greedy alone can strand a prediction whose only admissible gold was
  // taken by a higher-scoring pair. Augmenting paths recover maximum
  // cardinality while every greedily matched item stays matched.
  std::vector<bool> visited(n_gold);
  std::function<bool(std::size_t)> augment = [&](std::size_t i) {
    for (std::size_t j : adjacency[i]) {
      if (visited[j]) continue;
      visited[j] = true;
      if (!pred_of[j] || augment(*pred_of[j])) {
        gold_of[i] = j;
        pred_of[j] = i;
        return true;
      }
    }
    return false;
  };
  for (std::size_t i = 0; i < n_pred; ++i) {
    if (gold_of[i]) continue;
    std::fill(visited.begin(), visited.end(), false);
    augment(i);
  }
  Counts c;
  for (const auto& g : gold_of) c.tp += g.has_value();
  c.fp = n_pred - c.tp;
  c.fn = n_gold - c.tp;
  return c;
}

std::vector<std::string> normalized(const std::vector<std::string>& xs) {
  std::vector<std::string> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(codec::normalize_entity(x));
  return out;
}

std::vector<codec::EntityPair> normalized(const std::vector<codec::EntityPair>& xs) {
  std::vector<codec::EntityPair> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back({codec::normalize_entity(x.ade), codec::normalize_entity(x.suspect)});
  return out;
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

// Joins predictions to gold by example id. Entries are nullptr for gold
// texts without a prediction.
std::vector<const pipeline::Prediction*> join(std::span<const pipeline::Prediction> predictions,
                                              std::span<const corpus::Example> gold) {
  std::unordered_map<std::string, std::size_t> gold_index;
  for (std::size_t i = 0; i < gold.size(); ++i) gold_index.emplace(gold[i].id, i);
  std::vector<const pipeline::Prediction*> joined(gold.size(), nullptr);
  for (const auto& p : predictions) {
    auto it = gold_index.find(p.example_id);
    if (it == gold_index.end()) {
      throw EvalError(EvalError::Kind::MissingGold, "prediction " + p.example_id + " has no gold example");
    }
    if (joined[it->second] != nullptr) {
      throw EvalError(EvalError::Kind::DuplicatePrediction, "duplicate prediction for " + p.example_id);
    }
    joined[it->second] = &p;
  }
  return joined;
}

const pipeline::Prediction& empty_prediction() {
  static const pipeline::Prediction empty;
  return empty;
}

}  // namespace

void MatchMode::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw EvalError(EvalError::Kind::BadMode, "tau must lie in [0, 1]");
}

std::optional<MatchMode> parse_match_mode(std::string_view name, double tau) {
  if (name == "strict") return MatchMode{MatchKind::Strict, tau};
  if (name == "partial") return MatchMode{MatchKind::Partial, tau};
  return std::nullopt;
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::u32string x = text::utf8_decode(a);
  std::u32string y = text::utf8_decode(b);
  if (x.size() < y.size()) std::swap(x, y);
  std::vector<std::size_t> row(y.size() + 1);
  for (std::size_t j = 0; j <= y.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= x.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j) {
      std::size_t up = row[j];
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + (x[i - 1] == y[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[y.size()];
}

double similarity(std::string_view a, std::string_view b) {
  std::size_t longest = std::max(text::utf8_decode(a).size(), text::utf8_decode(b).size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

bool token_contains(std::string_view a, std::string_view b) {
  auto ta = text::tokens(a);
  auto tb = text::tokens(b);
  if (ta.empty() || tb.empty()) return ta.empty() && tb.empty();
  const auto& longer = ta.size() >= tb.size() ? ta : tb;
  const auto& shorter = ta.size() >= tb.size() ? tb : ta;
  return std::search(longer.begin(), longer.end(), shorter.begin(), shorter.end()) != longer.end();
}

std::optional<double> match_score(std::string_view pred, std::string_view gold, const MatchMode& mode) {
  if (mode.kind == MatchKind::Strict) return pred == gold ? std::optional<double>(1.0) : std::nullopt;
  double sim = similarity(pred, gold);
  if (sim >= mode.tau || token_contains(pred, gold)) return sim;
  return std::nullopt;
}

bool entity_match(std::string_view pred, std::string_view gold, const MatchMode& mode) {
  return match_score(pred, gold, mode).has_value();
}

double Counts::precision() const { return ratio(tp, tp + fp); }
double Counts::recall() const { return ratio(tp, tp + fn); }

double Counts::f1() const {
  double p = precision();
  double r = recall();
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

Counts assign_matches(std::span<const std::string> preds, std::span<const std::string> golds, const MatchMode& mode) {
  return greedy_assign(preds.size(), golds.size(),
                       [&](std::size_t i, std::size_t j) { return match_score(preds[i], golds[j], mode); });
}

Counts assign_pair_matches(std::span<const codec::EntityPair> preds, std::span<const codec::EntityPair> golds,
                           const MatchMode& mode) {
  return greedy_assign(preds.size(), golds.size(), [&](std::size_t i, std::size_t j) -> std::optional<double> {
    auto a = match_score(preds[i].ade, golds[j].ade, mode);
    if (!a) return std::nullopt;
    auto s = match_score(preds[i].suspect, golds[j].suspect, mode);
    if (!s) return std::nullopt;
    return (*a + *s) / 2;
  });
}

EvalReport micro_scores(std::span<const pipeline::Prediction> predictions, std::span<const corpus::Example> gold,
                        const MatchMode& mode) {
  mode.validate();
  auto joined = join(predictions, gold);
  Counts ade, suspect, relation;
  EvalReport report;
  report.mode = mode;
  report.num_texts = gold.size();
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const pipeline::Prediction& p = joined[i] ? *joined[i] : empty_prediction();
    if (!joined[i]) ++report.skipped_texts;
    ade += assign_matches(normalized(p.ades), normalized(gold[i].gold_ades), mode);
    suspect += assign_matches(normalized(p.suspects), normalized(gold[i].gold_suspects), mode);
    relation += assign_pair_matches(normalized(p.pairs), normalized(gold[i].gold_pairs), mode);
  }
  report.per_kind[std::string(kAde)] = KindScore::from(ade);
  report.per_kind[std::string(kSuspect)] = KindScore::from(suspect);
  report.per_kind[std::string(kRelation)] = KindScore::from(relation);
  return report;
}

Confusion re_confusion(std::span<const pipeline::RePairJudgment> judgments) {
  Confusion c;
  for (const auto& j : judgments) {
    if (j.gold) {
      ++(j.predicted ? c.gold_yes_pred_yes : c.gold_yes_pred_no);
    } else {
      ++(j.predicted ? c.gold_no_pred_yes : c.gold_no_pred_no);
    }
  }
  return c;
}

std::vector<pipeline::RePairJudgment> judgments_from_predictions(std::span<const pipeline::Prediction> predictions,
                                                                 std::span<const corpus::Example> gold) {
  auto joined = join(predictions, gold);
  std::vector<pipeline::RePairJudgment> out;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const corpus::Example& ex = gold[i];
    std::set<std::pair<std::string, std::string>> gold_set, pred_set;
    for (const auto& p : normalized(ex.gold_pairs)) gold_set.emplace(p.ade, p.suspect);
    if (joined[i]) {
      for (const auto& p : normalized(joined[i]->pairs)) pred_set.emplace(p.ade, p.suspect);
    }
    for (const auto& a : ex.gold_ades) {
      for (const auto& s : ex.gold_suspects) {
        std::pair<std::string, std::string> key{codec::normalize_entity(a), codec::normalize_entity(s)};
        out.push_back({ex.id, a, s, gold_set.count(key) > 0, pred_set.count(key) > 0});
      }
    }
  }
  return out;
}

std::string count_bucket(std::size_t entities) {
  if (entities >= 5) return "5+";
  return std::to_string(std::max<std::size_t>(1, entities));
}

std::map<std::string, BucketCounts> per_count_breakdown(std::span<const pipeline::Prediction> predictions,
                                                        std::span<const corpus::Example> gold,
                                                        const MatchMode& mode) {
  mode.validate();
  auto joined = join(predictions, gold);
  std::map<std::string, BucketCounts> out;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const pipeline::Prediction& p = joined[i] ? *joined[i] : empty_prediction();
    Counts c = assign_matches(normalized(p.ades), normalized(gold[i].gold_ades), mode);
    c += assign_matches(normalized(p.suspects), normalized(gold[i].gold_suspects), mode);
    BucketCounts& b = out[count_bucket(gold[i].gold_ades.size() + gold[i].gold_suspects.size())];
    ++b.texts;
    b.correct += c.tp;
    b.wrong += c.fp;
    b.missed += c.fn;
  }
  return out;
}

EvalReport evaluate(std::span<const pipeline::Prediction> predictions, std::span<const corpus::Example> gold,
                    const MatchMode& mode, std::optional<std::span<const pipeline::RePairJudgment>> judgments) {
  EvalReport report = micro_scores(predictions, gold, mode);
  report.per_count_breakdown = per_count_breakdown(predictions, gold, mode);
  if (judgments) {
    report.confusion = re_confusion(*judgments);
  } else {
    report.confusion = re_confusion(judgments_from_predictions(predictions, gold));
  }
  return report;
}

}  // namespace adeqa::eval
