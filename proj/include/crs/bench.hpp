#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crs/csv.hpp"
#include "crs/eval.hpp"

namespace crs {

enum class Tier { Hard = 0, Medium = 1, Easy = 2 };

std::string to_string(Tier tier);
Tier parse_tier(const std::string& text);

struct BenchCase {
  std::string id;
  Tier tier = Tier::Hard;
  double probability = 0.0;
};

struct BenchmarkSubset {
  std::vector<BenchCase> cases;  // hard, then medium, then easy; each in rank order
  int k = 0;

  std::vector<std::string> ids(Tier tier) const;
  bool contains(const std::string& id) const;

  /// case_id,tier,probability
  CsvTable to_csv() const;
  static BenchmarkSubset from_csv(const CsvTable& table);
};

/// Ranks cases by (|p - 0.5|, id). Hard = first k, easy = last k, medium =
/// the k cases centered in what remains (window start (r - k) / 2, r the
/// remaining count). Throws TooFewCases below 3k, DuplicateId on repeats.
BenchmarkSubset stratify_by_uncertainty(const std::vector<std::pair<std::string, double>>& probabilities,
                                        int k);

/// Observed class-1 share of the subset against the full case list; flagged
/// beyond 10 percentage points. Reported, never enforced.
struct ClassRatioCheck {
  double populationShare = 0.0;
  double subsetShare = 0.0;
  bool flagged = false;
};

ClassRatioCheck class_ratio_check(const BenchmarkSubset& subset, const std::map<std::string, int>& truth);

struct ExpertLabel {
  std::string rater;
  std::string caseId;
  int call = 0;
  int confidence = 3;  // 1..5
  std::string timestamp;
  int revision = 0;
};

/// Throws MalformedConfidence outside 1..5 and InvalidArgument for a call not in {0, 1}.
void validate_label(const ExpertLabel& label);

enum class PanelMethod { Majority, ConfidenceTieBreak, DeepTieRule };
std::string to_string(PanelMethod method);

struct PanelDecision {
  std::string caseId;
  std::array<int, 2> votes{0, 0};
  std::array<int, 2> confidence{0, 0};
  int decision = 0;
  PanelMethod method = PanelMethod::Majority;
};

/// Majority call; a vote tie goes to the class with the larger summed
/// confidence; a tie there too goes to class 0. Expects one latest label per
/// rater for a single case.
PanelDecision panel_decide(std::span<const ExpertLabel> labels);

/// Latest revision per (rater, case), ordered by case then rater.
std::vector<ExpertLabel> latest_labels(std::span<const ExpertLabel> history);

/// One panel decision per case over the latest labels.
std::map<std::string, PanelDecision> panel_decisions(std::span<const ExpertLabel> history);

/// rater -> (case -> call)
using RaterCalls = std::map<std::string, std::map<std::string, int>>;

RaterCalls calls_from_labels(std::span<const ExpertLabel> history);

struct TierAccuracy {
  std::map<std::string, std::array<double, 3>> perRater;  // hard, medium, easy
  std::array<double, 3> pooled{0.0, 0.0, 0.0};
};

/// Per rater: correct / k within each tier; pooled = mean over raters.
/// Throws IncompleteCoverage if a rater misses a subset case, UnknownCase if
/// truth lacks one.
TierAccuracy tier_accuracy(const RaterCalls& calls, const std::map<std::string, int>& truth,
                           const BenchmarkSubset& subset);

struct RaterRow {
  std::string rater;
  EvalReport report;
};

/// Metrics per rater over the cases they called. Throws UnknownCase.
std::vector<RaterRow> rater_report(const RaterCalls& calls, const std::map<std::string, int>& truth);

/// rater,n,accuracy,precision_0,recall_0,f1_0,precision_1,recall_1,f1_1
CsvTable rater_report_csv(const std::vector<RaterRow>& rows);

/// rater,case_id,call,confidence,timestamp,revision
CsvTable labels_to_csv(std::span<const ExpertLabel> labels);
std::vector<ExpertLabel> labels_from_csv(const CsvTable& table);

}  // namespace crs
