#include <cstdio>
#include <sstream>

#include "adeqa/eval.hpp"

namespace adeqa::eval {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string display_kind(const std::string& kind) {
  if (kind == kAde) return "ADE";
  if (kind == kSuspect) return "Suspect";
  if (kind == kRelation) return "Relationship";
  return kind;
}

const std::vector<std::string>& kind_order() {
  static const std::vector<std::string> order = {std::string(kAde), std::string(kSuspect), std::string(kRelation)};
  return order;
}

std::string to_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "kind,mode,precision,recall,f1,tp,fp,fn\n";
  for (const auto& kind : kind_order()) {
    auto it = r.per_kind.find(kind);
    if (it == r.per_kind.end()) continue;
    const KindScore& s = it->second;
    out << kind << ',' << r.mode.name() << ',' << fixed(s.precision, 4) << ',' << fixed(s.recall, 4) << ','
        << fixed(s.f1, 4) << ',' << s.counts.tp << ',' << s.counts.fp << ',' << s.counts.fn << '\n';
  }
  return out.str();
}

std::string to_markdown(const EvalReport& r) {
  std::ostringstream out;
  out << "| Entity | Match | Precision | Recall | F1 |\n";
  out << "|---|---|---|---|---|\n";
  for (const auto& kind : kind_order()) {
    auto it = r.per_kind.find(kind);
    if (it == r.per_kind.end()) continue;
    out << "| " << display_kind(kind) << " | " << r.mode.name() << " | " << fixed(it->second.precision, 2) << " | "
        << fixed(it->second.recall, 2) << " | " << fixed(it->second.f1, 2) << " |\n";
  }
  if (r.confusion) {
    const Confusion& c = *r.confusion;
    out << "\n| Gold \\ Predicted | relation | no-relation |\n";
    out << "|---|---|---|\n";
    out << "| relation | " << c.gold_yes_pred_yes << " | " << c.gold_yes_pred_no << " |\n";
    out << "| no-relation | " << c.gold_no_pred_yes << " | " << c.gold_no_pred_no << " |\n";
  }
  if (!r.per_count_breakdown.empty()) {
    out << "\n| Entities/text | Texts | Correct | Wrong | Missed |\n";
    out << "|---|---|---|---|---|\n";
    for (const auto& [bucket, b] : r.per_count_breakdown) {
      out << "| " << bucket << " | " << b.texts << " | " << b.correct << " | " << b.wrong << " | " << b.missed
          << " |\n";
    }
  }
  if (r.skipped_texts > 0) out << "\nSkipped texts: " << r.skipped_texts << "\n";
  return out.str();
}

}  // namespace

std::optional<ReportFormat> parse_report_format(std::string_view name) {
  if (name == "json") return ReportFormat::Json;
  if (name == "csv") return ReportFormat::Csv;
  if (name == "markdown" || name == "md") return ReportFormat::Markdown;
  return std::nullopt;
}

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["mode"] = {{"kind", r.mode.name()}, {"tau", r.mode.tau}};
  j["num_texts"] = r.num_texts;
  j["skipped_texts"] = r.skipped_texts;
  nlohmann::ordered_json kinds = nlohmann::ordered_json::object();
  for (const auto& kind : kind_order()) {
    auto it = r.per_kind.find(kind);
    if (it == r.per_kind.end()) continue;
    const KindScore& s = it->second;
    kinds[kind] = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1},
                   {"tp", s.counts.tp},        {"fp", s.counts.fp},   {"fn", s.counts.fn}};
  }
  j["per_kind"] = kinds;
  if (r.confusion) {
    const Confusion& c = *r.confusion;
    j["confusion"] = {{"gold_yes_pred_yes", c.gold_yes_pred_yes},
                      {"gold_yes_pred_no", c.gold_yes_pred_no},
                      {"gold_no_pred_yes", c.gold_no_pred_yes},
                      {"gold_no_pred_no", c.gold_no_pred_no}};
  } else {
    j["confusion"] = nullptr;
  }
  nlohmann::ordered_json buckets = nlohmann::ordered_json::object();
  for (const auto& [name, b] : r.per_count_breakdown) {
    buckets[name] = {{"texts", b.texts}, {"correct", b.correct}, {"wrong", b.wrong}, {"missed", b.missed}};
  }
  j["per_count_breakdown"] = buckets;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    auto mode = parse_match_mode(j.at("mode").at("kind").get<std::string>(), j.at("mode").at("tau").get<double>());
    if (!mode) throw EvalError(EvalError::Kind::BadReport, "unknown match mode");
    r.mode = *mode;
    r.num_texts = j.at("num_texts").get<std::size_t>();
    r.skipped_texts = j.at("skipped_texts").get<std::size_t>();
    for (const auto& [kind, s] : j.at("per_kind").items()) {
      KindScore ks;
      ks.precision = s.at("precision").get<double>();
      ks.recall = s.at("recall").get<double>();
      ks.f1 = s.at("f1").get<double>();
      ks.counts = {s.at("tp").get<std::size_t>(), s.at("fp").get<std::size_t>(), s.at("fn").get<std::size_t>()};
      r.per_kind[kind] = ks;
    }
    const auto& c = j.at("confusion");
    if (!c.is_null()) {
      r.confusion = Confusion{c.at("gold_yes_pred_yes").get<std::size_t>(), c.at("gold_yes_pred_no").get<std::size_t>(),
                              c.at("gold_no_pred_yes").get<std::size_t>(), c.at("gold_no_pred_no").get<std::size_t>()};
    }
    for (const auto& [name, b] : j.at("per_count_breakdown").items()) {
      r.per_count_breakdown[name] = {b.at("texts").get<std::size_t>(), b.at("correct").get<std::size_t>(),
                                     b.at("wrong").get<std::size_t>(), b.at("missed").get<std::size_t>()};
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw EvalError(EvalError::Kind::BadReport, e.what());
  }
}

std::string emit_report(const EvalReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::Json: return report_to_json(report).dump(2) + "\n";
    case ReportFormat::Csv: return to_csv(report);
    case ReportFormat::Markdown: return to_markdown(report);
  }
  throw EvalError(EvalError::Kind::UnsupportedFormat, "unsupported report format");
}

std::string emit_report(const EvalReport& report, std::string_view format) {
  auto f = parse_report_format(format);
  if (!f) throw EvalError(EvalError::Kind::UnsupportedFormat, "unsupported report format '" + std::string(format) + "'");
  return emit_report(report, *f);
}

}  // namespace adeqa::eval
