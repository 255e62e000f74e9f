#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "crs/csv.hpp"
#include "crs/dataset.hpp"
#include "crs/schema.hpp"

namespace crs {

/// Text-valued cohort export as read from disk; blank cell = null.
struct RawCohort {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::string provenance;

  Index size() const { return static_cast<Index>(rows.size()); }
  CsvTable to_csv() const { return {columns, rows}; }
  static RawCohort from_csv(CsvTable table, std::string provenance);
};

/// Column names of the non-predictor fields in a raw export.
struct IngestColumns {
  std::string id{kIdColumn};
  std::string treatment = "TREATMENT";
  std::string surgeryValue = "Sinus surgery";
  std::string followUp = "SNOT22_6M_TOTAL";
};

enum class Imputation {
  None,    // rows with nulls are dropped
  Median,  // median for continuous, mode for categorical
  Mode,    // mode for every column
};

struct CleanOptions {
  IngestColumns columns;
  Imputation imputation = Imputation::None;
};

/// Columns the 2R01 export carries beyond the schema; the default drop list.
std::vector<std::string> default_drop_columns();

namespace drop_reason {
inline constexpr const char* kNonSurgery = "non-surgery";
inline constexpr const char* kNoFollowUp = "no-follow-up";
inline constexpr const char* kNullField = "null-field";
}  // namespace drop_reason

struct CleanReport {
  std::string provenance;
  Index rowsIn = 0;
  Index rowsOut = 0;
  Index columnsOut = 0;  // predictors + outcome
  std::map<std::string, Index> droppedByReason;
  std::vector<std::string> droppedColumns;
  /// Nulls per predictor among surgery rows, before any row is dropped for them.
  std::map<std::string, Index> nullCensus;
  Index imputedCells = 0;

  Index dropped_total() const;
  /// One JSON object per line: a summary record, then one per reason/column/census entry.
  std::string to_jsonl() const;
};

/// Surgery filter -> follow-up filter -> null filter (or imputation), then
/// labels each row with the MCID rule and drops the six-month column.
/// A raw table that already carries an OUTCOME column and no follow-up column
/// is treated as a previously cleaned export (codes instead of text labels).
std::pair<LabeledDataset, CleanReport> clean_cohort(const RawCohort& raw, const Schema& schema,
                                                    const CleanOptions& options);

/// Row-wise union of two cohorts sharing one schema; ids must stay unique.
LabeledDataset merge_cohorts(const LabeledDataset& a, const LabeledDataset& b);

/// Cleaned dataset rendered back in the raw grammar (codes, OUTCOME column).
RawCohort to_raw(const LabeledDataset& data, std::string provenance = "cleaned");

// ---------------------------------------------------------------------------
// Synthetic cohorts

struct SyntheticSpec {
  Index n = 524;
  double prevalence = 423.0 / 524.0;
  double signalStrength = 1.0;
  std::uint64_t seed = 7;
};

/// Complete, all-surgical raw cohort with a planted logistic signal on
/// SNOT22_BLN_TOTAL (strongest), BLN_CT_TOTAL, AGE and a few history fields.
/// Class counts are exact: round(n * prevalence) rows reach the MCID.
RawCohort generate_synthetic(const SyntheticSpec& spec, const Schema& schema,
                             const IngestColumns& columns = {});

/// Feature weights of the planted signal, keyed by feature name.
const std::map<std::string, double>& planted_weights();

/// Layout of a multi-stage raw export: how many rows each cleaning stage
/// should remove and where the nulls sit.
struct CohortShape {
  std::string provenance;
  Index rowsTotal = 0;
  Index surgical = 0;
  Index noFollowUp = 0;
  Index nullRows = 0;  // followed-up surgical rows holding at least one null
  std::map<std::string, Index> nullCensus;
  std::vector<std::string> extraColumns;
  Index cleanClassOne = 0;  // class-1 rows among the survivors
  double signalStrength = 1.0;
  std::uint64_t seed = 0;

  Index expected_rows_out() const { return surgical - noFollowUp - nullRows; }
};

CohortShape shape_2r01();
CohortShape shape_3r01();

RawCohort generate_shaped(const CohortShape& shape, const Schema& schema,
                          const IngestColumns& columns = {});

}  // namespace crs
