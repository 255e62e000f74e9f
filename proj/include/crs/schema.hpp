#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crs {

enum class FeatureKind { Continuous, Categorical };

struct ValueRange {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// One predictor column. Categorical codes are the positions in `labels`,
/// so they are consecutive from 0 by construction.
struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::Continuous;
  std::vector<std::string> labels;
  ValueRange range;

  bool is_categorical() const { return kind == FeatureKind::Categorical; }
  std::size_t cardinality() const { return labels.size(); }

  /// Looks up a text label after trimming and case-folding.
  /// Throws ErrorCode::UnknownLabel for anything outside the dictionary.
  int encode(std::string_view text) const;
  const std::string& decode(int code) const;
  /// True when `value` is an integral code declared by this feature.
  bool has_code(double value) const;
};

/// Trims surrounding whitespace and lower-cases ASCII letters.
std::string normalize_label(std::string_view text);

/// Ordered predictor set loaded from the declarative schema file
/// (grammar documented in data/schema.txt).
class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<FeatureSpec> features);

  static Schema parse(std::string_view text);
  static Schema load(const std::filesystem::path& path);
  std::string serialize() const;

  std::size_t size() const { return features_.size(); }
  const std::vector<FeatureSpec>& features() const { return features_; }
  const FeatureSpec& operator[](std::size_t i) const { return features_[i]; }
  std::optional<std::size_t> index_of(std::string_view name) const;
  const FeatureSpec& at(std::string_view name) const;
  std::vector<std::string> names() const;

  bool operator==(const Schema& other) const;

 private:
  std::vector<FeatureSpec> features_;
};

/// Name of the baseline SNOT-22 total column; the scale runs 0-110.
inline constexpr std::string_view kBaselineColumn = "SNOT22_BLN_TOTAL";
inline constexpr double kSnotMin = 0.0;
inline constexpr double kSnotMax = 110.0;
/// Minimal clinically important difference in SNOT-22 points.
inline constexpr double kMcid = 8.9;

struct OutcomeLabel {
  int value = 0;
  double delta = 0.0;
};

/// delta = baseline - sixMonth (positive means improvement); label 1 iff
/// delta >= kMcid, boundary inclusive. Throws MissingFollowUp when the
/// six-month score is absent and InvalidArgument for scores off the scale.
OutcomeLabel label_outcome(double baseline, std::optional<double> sixMonth);

struct PatientRecord {
  std::string id;
  std::map<std::string, double> values;
  double snot22Baseline = 0.0;
  std::optional<double> snot22SixMonth;
};

struct Violation {
  std::string feature;
  std::string message;

  bool operator==(const Violation&) const = default;
};

/// Lists every missing, unknown, out-of-range or uncodable field; empty means ok.
std::vector<Violation> validate_record(const PatientRecord& record, const Schema& schema);

}  // namespace crs
