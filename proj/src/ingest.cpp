#include "crs/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "crs/error.hpp"
#include "json.hpp"

namespace crs {

namespace {

bool is_blank(const std::string& cell) {
  return std::all_of(cell.begin(), cell.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

std::optional<double> parse_number(const std::string& cell) {
  std::string s = normalize_label(cell);
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::logic_error&) {
    return std::nullopt;
  }
}

double encode_cell(const FeatureSpec& f, const std::string& cell, bool preEncoded,
                   const std::string& rowId) {
  if (f.is_categorical()) {
    if (preEncoded) {
      auto v = parse_number(cell);
      if (!v || !f.has_code(*v)) {
        throw Error(ErrorCode::UnknownLabel, "code '" + cell + "' not in dictionary of " +
                                                 f.name + " (row " + rowId + ")");
      }
      return *v;
    }
    return static_cast<double>(f.encode(cell));
  }
  auto v = parse_number(cell);
  if (!v) {
    throw Error(ErrorCode::ParseError,
                "non-numeric value '" + cell + "' in " + f.name + " (row " + rowId + ")");
  }
  if (!f.range.contains(*v)) {
    throw Error(ErrorCode::InvalidArgument, f.name + " = " + cell + " out of range [" +
                                                format_number(f.range.lo) + "," +
                                                format_number(f.range.hi) + "] (row " +
                                                rowId + ")");
  }
  return *v;
}

}  // namespace

RawCohort RawCohort::from_csv(CsvTable table, std::string provenance) {
  RawCohort raw;
  raw.columns = std::move(table.header);
  raw.rows = std::move(table.rows);
  raw.provenance = std::move(provenance);
  return raw;
}

std::vector<std::string> default_drop_columns() {
  return {"TREATMENT",      "HUV_BLN",         "HUV_6M",           "SITE",
          "ENROLLMENT_YEAR", "BMI",            "SNOT22_3M_TOTAL",  "SNOT22_12M_TOTAL",
          "HUV_3M",          "HUV_12M",        "RHINOLOGIC_DOMAIN", "SLEEP_DOMAIN",
          "EAR_FACIAL_DOMAIN", "PSYCH_DOMAIN", "EXTRANASAL_DOMAIN", "SURGERY_DATE",
          "SURGEON_ID",      "EXTENT_OF_SURGERY", "CONSENT_VERSION"};
}

Index CleanReport::dropped_total() const {
  Index total = 0;
  for (const auto& [_, n] : droppedByReason) total += n;
  return total;
}

std::string CleanReport::to_jsonl() const {
  using nlohmann::json;
  std::string out;
  auto line = [&out](const json& j) { out += j.dump() + "\n"; };
  line({{"record", "summary"},
        {"provenance", provenance},
        {"rowsIn", rowsIn},
        {"rowsOut", rowsOut},
        {"columnsOut", columnsOut},
        {"imputedCells", imputedCells}});
  for (const auto& [reason, n] : droppedByReason) {
    line({{"record", "dropped_rows"}, {"reason", reason}, {"count", n}});
  }
  for (const auto& c : droppedColumns) line({{"record", "dropped_column"}, {"name", c}});
  for (const auto& [feature, n] : nullCensus) {
    line({{"record", "null_census"}, {"feature", feature}, {"count", n}});
  }
  return out;
}

std::pair<LabeledDataset, CleanReport> clean_cohort(const RawCohort& raw, const Schema& schema,
                                                    const CleanOptions& options) {
  const IngestColumns& cols = options.columns;
  std::unordered_map<std::string, std::size_t> where;
  for (std::size_t i = 0; i < raw.columns.size(); ++i) {
    if (!where.emplace(raw.columns[i], i).second) {
      throw Error(ErrorCode::SchemaMismatch, "duplicate column " + raw.columns[i]);
    }
  }
  auto find = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = where.find(name);
    if (it == where.end()) return std::nullopt;
    return it->second;
  };
  auto require = [&](const std::string& name) {
    auto c = find(name);
    if (!c) throw Error(ErrorCode::SchemaMismatch, "raw cohort lacks column " + name);
    return *c;
  };

  const auto outcomeCol = find(std::string(kOutcomeColumn));
  const auto followCol = find(cols.followUp);
  const bool preEncoded = outcomeCol.has_value() && !followCol.has_value();
  const std::size_t idCol = require(cols.id);
  std::vector<std::size_t> featCols;
  for (const auto& f : schema.features()) featCols.push_back(require(f.name));
  const std::size_t baselineCol = require(std::string(kBaselineColumn));
  std::optional<std::size_t> treatCol = find(cols.treatment);
  if (!preEncoded) {
    require(cols.treatment);
    require(cols.followUp);
  }
  for (const auto& row : raw.rows) {
    if (row.size() != raw.columns.size()) {
      throw Error(ErrorCode::SchemaMismatch, "raw cohort is not rectangular");
    }
  }

  CleanReport report;
  report.provenance = raw.provenance;
  report.rowsIn = raw.size();
  report.droppedByReason = {{drop_reason::kNonSurgery, 0},
                            {drop_reason::kNoFollowUp, 0},
                            {drop_reason::kNullField, 0}};
  {
    std::set<std::size_t> kept(featCols.begin(), featCols.end());
    kept.insert(idCol);
    for (std::size_t i = 0; i < raw.columns.size(); ++i) {
      if (!kept.count(i)) report.droppedColumns.push_back(raw.columns[i]);
    }
  }

  // Stage 1: surgery rows only.
  std::vector<std::size_t> rows;
  const std::string surgery = normalize_label(cols.surgeryValue);
  for (std::size_t r = 0; r < raw.rows.size(); ++r) {
    if (treatCol && normalize_label(raw.rows[r][*treatCol]) != surgery) {
      ++report.droppedByReason[drop_reason::kNonSurgery];
      continue;
    }
    rows.push_back(r);
  }
  for (std::size_t j = 0; j < featCols.size(); ++j) {
    Index nulls = 0;
    for (auto r : rows) nulls += is_blank(raw.rows[r][featCols[j]]) ? 1 : 0;
    if (nulls > 0) report.nullCensus[schema[j].name] = nulls;
  }

  // Stage 2: rows without a six-month score cannot be labeled.
  if (followCol) {
    std::vector<std::size_t> keep;
    for (auto r : rows) {
      if (is_blank(raw.rows[r][*followCol])) {
        ++report.droppedByReason[drop_reason::kNoFollowUp];
      } else {
        keep.push_back(r);
      }
    }
    rows.swap(keep);
  }

  // Stage 3: nulls in predictors, dropped or imputed.
  std::vector<std::optional<double>> fill(featCols.size());
  if (options.imputation != Imputation::None) {
    for (std::size_t j = 0; j < featCols.size(); ++j) {
      std::vector<double> seen;
      for (auto r : rows) {
        const auto& cell = raw.rows[r][featCols[j]];
        if (!is_blank(cell)) {
          seen.push_back(encode_cell(schema[j], cell, preEncoded, raw.rows[r][idCol]));
        }
      }
      if (seen.empty()) continue;
      std::sort(seen.begin(), seen.end());
      const bool useMedian =
          options.imputation == Imputation::Median && !schema[j].is_categorical();
      if (useMedian) {
        const std::size_t m = seen.size() / 2;
        fill[j] = seen.size() % 2 ? seen[m] : 0.5 * (seen[m - 1] + seen[m]);
      } else {
        // Mode, smallest value on ties.
        double best = seen.front();
        std::size_t bestCount = 0;
        for (std::size_t i = 0; i < seen.size();) {
          std::size_t k = i;
          while (k < seen.size() && seen[k] == seen[i]) ++k;
          if (k - i > bestCount) {
            bestCount = k - i;
            best = seen[i];
          }
          i = k;
        }
        fill[j] = best;
      }
    }
  }

  LabeledDataset ds;
  ds.features = FeatureInfo::from_schema(schema);
  std::vector<std::vector<double>> values;
  std::vector<int> labels;
  std::unordered_set<std::string> ids;
  for (auto r : rows) {
    const auto& row = raw.rows[r];
    bool hasNull = false;
    Index imputedHere = 0;
    std::vector<double> encoded(featCols.size());
    for (std::size_t j = 0; j < featCols.size(); ++j) {
      const auto& cell = row[featCols[j]];
      if (is_blank(cell)) {
        if (fill[j]) {
          encoded[j] = *fill[j];
          ++imputedHere;
        } else {
          hasNull = true;
        }
      } else {
        encoded[j] = encode_cell(schema[j], cell, preEncoded, row[idCol]);
      }
    }
    // The label needs a real baseline score; never impute it.
    if (hasNull || is_blank(row[baselineCol])) {
      ++report.droppedByReason[drop_reason::kNullField];
      continue;
    }
    report.imputedCells += imputedHere;

    int label = 0;
    if (preEncoded) {
      const std::string y = normalize_label(row[*outcomeCol]);
      if (y != "0" && y != "1") {
        throw Error(ErrorCode::ParseError, "outcome must be 0 or 1 (row " + row[idCol] + ")");
      }
      label = y == "1" ? 1 : 0;
    } else {
      const auto baseline = parse_number(row[baselineCol]);
      const auto sixMonth = parse_number(row[*followCol]);
      if (!sixMonth) {
        throw Error(ErrorCode::ParseError,
                    "non-numeric follow-up score '" + row[*followCol] + "' (row " + row[idCol] + ")");
      }
      label = label_outcome(*baseline, sixMonth).value;
    }
    if (!ids.insert(row[idCol]).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate id " + row[idCol]);
    }
    ds.ids.push_back(row[idCol]);
    values.push_back(std::move(encoded));
    labels.push_back(label);
  }

  const auto n = static_cast<Index>(values.size());
  ds.X.resize(n, static_cast<Index>(featCols.size()));
  ds.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < featCols.size(); ++j) {
      ds.X(i, static_cast<Index>(j)) = values[static_cast<std::size_t>(i)][j];
    }
    ds.y(i) = labels[static_cast<std::size_t>(i)];
  }
  report.rowsOut = n;
  report.columnsOut = static_cast<Index>(featCols.size()) + 1;
  return {std::move(ds), std::move(report)};
}

LabeledDataset merge_cohorts(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.rows() == 0 && a.features.names.empty()) return b;
  if (b.rows() == 0 && b.features.names.empty()) return a;
  if (!(a.features == b.features)) {
    throw Error(ErrorCode::SchemaMismatch, "cohorts do not share a schema");
  }
  std::unordered_set<std::string> seen(a.ids.begin(), a.ids.end());
  for (const auto& id : b.ids) {
    if (seen.count(id)) throw Error(ErrorCode::DuplicateId, "id " + id + " appears in both cohorts");
  }
  LabeledDataset out;
  out.features = a.features;
  out.ids = a.ids;
  out.ids.insert(out.ids.end(), b.ids.begin(), b.ids.end());
  out.X.resize(a.rows() + b.rows(), a.cols());
  if (a.rows()) out.X.topRows(a.rows()) = a.X;
  if (b.rows()) out.X.bottomRows(b.rows()) = b.X;
  out.y.resize(a.rows() + b.rows());
  if (a.rows()) out.y.head(a.rows()) = a.y;
  if (b.rows()) out.y.tail(b.rows()) = b.y;
  return out;
}

RawCohort to_raw(const LabeledDataset& data, std::string provenance) {
  return RawCohort::from_csv(data.to_csv(), std::move(provenance));
}

}  // namespace crs
