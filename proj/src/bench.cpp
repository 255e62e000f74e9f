#include "crs/bench.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "crs/dataset.hpp"
#include "crs/error.hpp"

namespace crs {

std::string to_string(Tier tier) {
  switch (tier) {
    case Tier::Hard: return "hard";
    case Tier::Medium: return "medium";
    case Tier::Easy: return "easy";
  }
  return "hard";
}

Tier parse_tier(const std::string& text) {
  if (text == "hard") return Tier::Hard;
  if (text == "medium") return Tier::Medium;
  if (text == "easy") return Tier::Easy;
  throw Error(ErrorCode::ParseError, "unknown tier '" + text + "'");
}

std::string to_string(PanelMethod method) {
  switch (method) {
    case PanelMethod::Majority: return "majority";
    case PanelMethod::ConfidenceTieBreak: return "confidenceTieBreak";
    case PanelMethod::DeepTieRule: return "deepTieRule";
  }
  return "majority";
}

std::vector<std::string> BenchmarkSubset::ids(Tier tier) const {
  std::vector<std::string> out;
  for (const auto& c : cases) {
    if (c.tier == tier) out.push_back(c.id);
  }
  return out;
}

bool BenchmarkSubset::contains(const std::string& id) const {
  return std::any_of(cases.begin(), cases.end(), [&](const BenchCase& c) { return c.id == id; });
}

CsvTable BenchmarkSubset::to_csv() const {
  CsvTable t;
  t.header = {"case_id", "tier", "probability"};
  for (const auto& c : cases) t.rows.push_back({c.id, to_string(c.tier), format_number(c.probability)});
  return t;
}

BenchmarkSubset BenchmarkSubset::from_csv(const CsvTable& table) {
  if (table.header != std::vector<std::string>{"case_id", "tier", "probability"}) {
    throw Error(ErrorCode::ParseError, "benchmark subset header must be case_id,tier,probability");
  }
  BenchmarkSubset s;
  std::array<int, 3> counts{0, 0, 0};
  for (const auto& row : table.rows) {
    BenchCase c{row[0], parse_tier(row[1]), std::stod(row[2])};
    ++counts[static_cast<std::size_t>(c.tier)];
    s.cases.push_back(c);
  }
  if (counts[0] != counts[1] || counts[1] != counts[2]) {
    throw Error(ErrorCode::ParseError, "benchmark tiers differ in size");
  }
  s.k = counts[0];
  return s;
}

BenchmarkSubset stratify_by_uncertainty(const std::vector<std::pair<std::string, double>>& probabilities,
                                        int k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  const auto n = static_cast<int>(probabilities.size());
  if (n < 3 * k) {
    throw Error(ErrorCode::TooFewCases, "need at least " + std::to_string(3 * k) + " cases, got " +
                                            std::to_string(n));
  }
  std::set<std::string> seen;
  for (const auto& [id, p] : probabilities) {
    if (!seen.insert(id).second) throw Error(ErrorCode::DuplicateId, "duplicate case id " + id);
  }
  auto ranked = probabilities;
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    const double ua = std::fabs(a.second - 0.5), ub = std::fabs(b.second - 0.5);
    if (ua != ub) return ua < ub;
    return a.first < b.first;
  });

  BenchmarkSubset s;
  s.k = k;
  for (int i = 0; i < k; ++i) s.cases.push_back({ranked[static_cast<std::size_t>(i)].first, Tier::Hard,
                                                 ranked[static_cast<std::size_t>(i)].second});
  const int remaining = n - 2 * k;
  const int start = k + (remaining - k) / 2;
  for (int i = start; i < start + k; ++i) {
    s.cases.push_back({ranked[static_cast<std::size_t>(i)].first, Tier::Medium,
                       ranked[static_cast<std::size_t>(i)].second});
  }
  for (int i = n - k; i < n; ++i) {
    s.cases.push_back({ranked[static_cast<std::size_t>(i)].first, Tier::Easy,
                       ranked[static_cast<std::size_t>(i)].second});
  }
  return s;
}

ClassRatioCheck class_ratio_check(const BenchmarkSubset& subset, const std::map<std::string, int>& truth) {
  if (truth.empty() || subset.cases.empty()) {
    throw Error(ErrorCode::InvalidArgument, "class ratio check needs cases and labels");
  }
  ClassRatioCheck c;
  int ones = 0;
  for (const auto& [id, label] : truth) ones += label == 1;
  c.populationShare = static_cast<double>(ones) / static_cast<double>(truth.size());
  int subsetOnes = 0;
  for (const auto& bc : subset.cases) {
    const auto it = truth.find(bc.id);
    if (it == truth.end()) throw Error(ErrorCode::UnknownCase, "no label for case " + bc.id);
    subsetOnes += it->second == 1;
  }
  c.subsetShare = static_cast<double>(subsetOnes) / static_cast<double>(subset.cases.size());
  c.flagged = std::fabs(c.subsetShare - c.populationShare) > 0.10;
  return c;
}

void validate_label(const ExpertLabel& label) {
  if (label.confidence < 1 || label.confidence > 5) {
    throw Error(ErrorCode::MalformedConfidence,
                "confidence must be 1..5, got " + std::to_string(label.confidence));
  }
  if (label.call != 0 && label.call != 1) {
    throw Error(ErrorCode::InvalidArgument, "call must be 0 or 1, got " + std::to_string(label.call));
  }
}

PanelDecision panel_decide(std::span<const ExpertLabel> labels) {
  if (labels.empty()) throw Error(ErrorCode::InvalidArgument, "panel needs at least one label");
  PanelDecision d;
  d.caseId = labels.front().caseId;
  for (const auto& l : labels) {
    validate_label(l);
    ++d.votes[static_cast<std::size_t>(l.call)];
    d.confidence[static_cast<std::size_t>(l.call)] += l.confidence;
  }
  if (d.votes[0] != d.votes[1]) {
    d.decision = d.votes[1] > d.votes[0] ? 1 : 0;
    d.method = PanelMethod::Majority;
  } else if (d.confidence[0] != d.confidence[1]) {
    d.decision = d.confidence[1] > d.confidence[0] ? 1 : 0;
    d.method = PanelMethod::ConfidenceTieBreak;
  } else {
    d.decision = 0;
    d.method = PanelMethod::DeepTieRule;
  }
  return d;
}

std::vector<ExpertLabel> latest_labels(std::span<const ExpertLabel> history) {
  std::map<std::pair<std::string, std::string>, ExpertLabel> latest;
  for (const auto& l : history) {
    const auto key = std::make_pair(l.caseId, l.rater);
    auto it = latest.find(key);
    if (it == latest.end() || l.revision >= it->second.revision) latest[key] = l;
  }
  std::vector<ExpertLabel> out;
  for (auto& [key, l] : latest) out.push_back(std::move(l));
  return out;
}

std::map<std::string, PanelDecision> panel_decisions(std::span<const ExpertLabel> history) {
  std::map<std::string, std::vector<ExpertLabel>> byCase;
  for (auto& l : latest_labels(history)) byCase[l.caseId].push_back(l);
  std::map<std::string, PanelDecision> out;
  for (const auto& [id, labels] : byCase) out[id] = panel_decide(labels);
  return out;
}

RaterCalls calls_from_labels(std::span<const ExpertLabel> history) {
  RaterCalls calls;
  for (const auto& l : latest_labels(history)) calls[l.rater][l.caseId] = l.call;
  return calls;
}

TierAccuracy tier_accuracy(const RaterCalls& calls, const std::map<std::string, int>& truth,
                           const BenchmarkSubset& subset) {
  if (calls.empty()) throw Error(ErrorCode::InvalidArgument, "no rater calls");
  if (subset.k < 1) throw Error(ErrorCode::InvalidArgument, "empty benchmark subset");
  TierAccuracy out;
  for (const auto& [rater, byCase] : calls) {
    std::array<int, 3> correct{0, 0, 0};
    for (const auto& c : subset.cases) {
      const auto t = truth.find(c.id);
      if (t == truth.end()) throw Error(ErrorCode::UnknownCase, "no ground truth for case " + c.id);
      const auto call = byCase.find(c.id);
      if (call == byCase.end()) {
        throw Error(ErrorCode::IncompleteCoverage, "rater " + rater + " has no call for case " + c.id);
      }
      correct[static_cast<std::size_t>(c.tier)] += call->second == t->second;
    }
    auto& acc = out.perRater[rater];
    for (std::size_t t = 0; t < 3; ++t) acc[t] = static_cast<double>(correct[t]) / subset.k;
  }
  for (std::size_t t = 0; t < 3; ++t) {
    double sum = 0.0;
    for (const auto& [rater, acc] : out.perRater) sum += acc[t];
    out.pooled[t] = sum / static_cast<double>(out.perRater.size());
  }
  return out;
}

std::vector<RaterRow> rater_report(const RaterCalls& calls, const std::map<std::string, int>& truth) {
  std::vector<RaterRow> rows;
  for (const auto& [rater, byCase] : calls) {
    Eigen::VectorXi yTrue(static_cast<Index>(byCase.size())), yPred(static_cast<Index>(byCase.size()));
    Index i = 0;
    for (const auto& [id, call] : byCase) {
      const auto t = truth.find(id);
      if (t == truth.end()) throw Error(ErrorCode::UnknownCase, "no ground truth for case " + id);
      yTrue(i) = t->second;
      yPred(i) = call;
      ++i;
    }
    rows.push_back({rater, report(confusion(yTrue, yPred))});
  }
  return rows;
}

CsvTable rater_report_csv(const std::vector<RaterRow>& rows) {
  CsvTable t;
  t.header = {"rater", "n", "accuracy", "precision_0", "recall_0", "f1_0",
              "precision_1", "recall_1", "f1_1"};
  for (const auto& r : rows) {
    const auto& p = r.report.perClass;
    t.rows.push_back({r.rater, std::to_string(r.report.cm.total()), format_number(r.report.accuracy),
                      format_number(p[0].precision), format_number(p[0].recall), format_number(p[0].f1),
                      format_number(p[1].precision), format_number(p[1].recall), format_number(p[1].f1)});
  }
  return t;
}

CsvTable labels_to_csv(std::span<const ExpertLabel> labels) {
  CsvTable t;
  t.header = {"rater", "case_id", "call", "confidence", "timestamp", "revision"};
  for (const auto& l : labels) {
    t.rows.push_back({l.rater, l.caseId, std::to_string(l.call), std::to_string(l.confidence), l.timestamp,
                      std::to_string(l.revision)});
  }
  return t;
}

std::vector<ExpertLabel> labels_from_csv(const CsvTable& table) {
  const std::vector<std::string> expected{"rater", "case_id", "call", "confidence", "timestamp", "revision"};
  if (table.header != expected) {
    throw Error(ErrorCode::ParseError, "label header must be rater,case_id,call,confidence,timestamp,revision");
  }
  std::vector<ExpertLabel> out;
  for (const auto& row : table.rows) {
    try {
      ExpertLabel l{row[0], row[1], std::stoi(row[2]), std::stoi(row[3]), row[4], std::stoi(row[5])};
      validate_label(l);
      out.push_back(std::move(l));
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::ParseError, "non-numeric field in label row for case " + row[1]);
    }
  }
  return out;
}

}  // namespace crs
