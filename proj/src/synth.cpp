#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "crs/error.hpp"
#include "crs/ingest.hpp"

namespace crs {

namespace {

struct Marginal {
  double mean;
  double sd;
  double lo;
  double hi;
};

// Cohort-like marginals for the continuous predictors; anything else in the
// schema falls back to a centered normal spanning the declared range.
Marginal marginal_for(const FeatureSpec& f) {
  if (f.name == kBaselineColumn) return {50.0, 20.0, 10.0, f.range.hi};
  if (f.name == "AGE") return {50.0, 15.0, f.range.lo, f.range.hi};
  if (f.name == "BLN_CT_TOTAL") return {12.0, 6.0, f.range.lo, f.range.hi};
  if (f.name == "BLN_ENDO_TOTAL") return {6.0, 3.5, f.range.lo, f.range.hi};
  return {0.5 * (f.range.lo + f.range.hi), (f.range.hi - f.range.lo) / 6.0, f.range.lo,
          f.range.hi};
}

double truncated_normal(std::mt19937_64& rng, const Marginal& m) {
  std::normal_distribution<double> dist(m.mean, m.sd);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double v = std::round(dist(rng));
    if (v >= m.lo && v <= m.hi) return v;
  }
  return std::clamp(std::round(m.mean), m.lo, m.hi);
}

std::string pad_id(const std::string& prefix, Index i) {
  std::string num = std::to_string(i + 1);
  if (num.size() < 4) num.insert(0, 4 - num.size(), '0');
  return prefix + num;
}

/// Feature block plus labels and six-month scores for `n` complete surgical rows.
struct Block {
  std::vector<std::vector<std::string>> featureText;  // schema order
  std::vector<int> label;
  std::vector<double> baseline;
  std::vector<double> sixMonth;
};

Block draw_block(Index n, Index classOne, double signal, const Schema& schema,
                 std::mt19937_64& rng) {
  Block b;
  const auto& weights = planted_weights();
  std::vector<double> latent(static_cast<std::size_t>(n), 0.0);
  const auto baselineIdx = schema.index_of(kBaselineColumn);
  if (!baselineIdx) throw Error(ErrorCode::SchemaMismatch, "schema lacks SNOT22_BLN_TOTAL");

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Index i = 0; i < n; ++i) {
    std::vector<std::string> text;
    text.reserve(schema.size());
    double score = 0.0;
    for (const auto& f : schema.features()) {
      double standardized = 0.0;
      if (f.is_categorical()) {
        std::uniform_int_distribution<int> pick(0, static_cast<int>(f.cardinality()) - 1);
        const int code = pick(rng);
        text.push_back(f.labels[static_cast<std::size_t>(code)]);
        const double k = static_cast<double>(f.cardinality());
        standardized = (code - 0.5 * (k - 1.0)) / (0.5 * k);
      } else {
        const Marginal m = marginal_for(f);
        const double v = truncated_normal(rng, m);
        text.push_back(format_number(v));
        standardized = (v - m.mean) / m.sd;
        if (&f == &schema[*baselineIdx]) b.baseline.push_back(v);
      }
      auto w = weights.find(f.name);
      if (w != weights.end()) score += w->second * standardized;
    }
    // Logistic latent-variable model; the class-1 set is the top `classOne`
    // latent values, which fixes the realized prevalence exactly.
    double u = unit(rng);
    u = std::clamp(u, 1e-12, 1.0 - 1e-12);
    latent[static_cast<std::size_t>(i)] = signal * score + std::log(u / (1.0 - u));
    b.featureText.push_back(std::move(text));
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index c) {
    return latent[static_cast<std::size_t>(a)] > latent[static_cast<std::size_t>(c)];
  });
  b.label.assign(static_cast<std::size_t>(n), 0);
  for (Index r = 0; r < classOne; ++r) b.label[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = 1;

  for (Index i = 0; i < n; ++i) {
    const double base = b.baseline[static_cast<std::size_t>(i)];
    double delta;
    if (b.label[static_cast<std::size_t>(i)] == 1) {
      std::uniform_int_distribution<int> d(9, static_cast<int>(std::min(base, 9.0 + 40.0)));
      delta = d(rng);
    } else {
      std::uniform_int_distribution<int> d(static_cast<int>(std::max(-15.0, base - kSnotMax)), 8);
      delta = d(rng);
    }
    b.sixMonth.push_back(base - delta);
  }
  return b;
}

}  // namespace

const std::map<std::string, double>& planted_weights() {
  static const std::map<std::string, double> weights = {
      {"SNOT22_BLN_TOTAL", 3.0}, {"BLN_CT_TOTAL", 1.2},    {"AGE", -0.8},
      {"BLN_ENDO_TOTAL", 0.6},   {"ALLERGY_TESTING", 0.5}, {"PREVIOUS_SURGERY", -0.5},
      {"CRS_POLYPS", 0.4},       {"HOUSEHOLD_INCOME", 0.3}};
  return weights;
}

RawCohort generate_synthetic(const SyntheticSpec& spec, const Schema& schema,
                             const IngestColumns& columns) {
  if (spec.n < 1 || !(spec.prevalence > 0.0 && spec.prevalence < 1.0) ||
      !(spec.signalStrength >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "synthetic spec needs n >= 1, 0 < prevalence < 1, signal >= 0");
  }
  std::mt19937_64 rng(spec.seed);
  const auto classOne = static_cast<Index>(std::llround(static_cast<double>(spec.n) * spec.prevalence));
  Block b = draw_block(spec.n, classOne, spec.signalStrength, schema, rng);

  RawCohort raw;
  raw.provenance = "synthetic";
  raw.columns.push_back(columns.id);
  raw.columns.push_back(columns.treatment);
  for (const auto& f : schema.features()) raw.columns.push_back(f.name);
  raw.columns.push_back(columns.followUp);
  for (Index i = 0; i < spec.n; ++i) {
    std::vector<std::string> row;
    row.push_back(pad_id("S", i));
    row.push_back(columns.surgeryValue);
    for (auto& cell : b.featureText[static_cast<std::size_t>(i)]) row.push_back(std::move(cell));
    row.push_back(format_number(b.sixMonth[static_cast<std::size_t>(i)]));
    raw.rows.push_back(std::move(row));
  }
  return raw;
}

CohortShape shape_2r01() {
  CohortShape s;
  s.provenance = "2R01";
  s.rowsTotal = 791;
  s.surgical = 604;
  s.noFollowUp = 217;
  s.nullRows = 16;
  s.nullCensus = {{"AGE", 1},        {"RACE", 1},          {"EDUCATION", 10},
                  {"HOUSEHOLD_INCOME", 7}, {"SMOKER", 4},  {"ALCOHOL", 5},
                  {"DIABETES", 1},   {"BLN_CT_TOTAL", 2},  {"BLN_ENDO_TOTAL", 3},
                  {"SNOT22_BLN_TOTAL", 1}};
  // 50 attributes: 30 predictors, treatment, six-month score and 18 others.
  auto drop = default_drop_columns();
  s.extraColumns.assign(drop.begin() + 1, drop.end());
  s.cleanClassOne = 299;
  s.seed = 2001;
  return s;
}

CohortShape shape_3r01() {
  CohortShape s;
  s.provenance = "3R01";
  s.rowsTotal = 354;
  s.surgical = 266;
  s.noFollowUp = 103;
  s.nullRows = 10;
  s.nullCensus = {{"RACE", 2},        {"EDUCATION", 3},      {"HOUSEHOLD_INCOME", 1},
                  {"OSA_HISTORY", 3}, {"ALCOHOL", 3},        {"BLN_ENDO_TOTAL", 3},
                  {"SNOT22_BLN_TOTAL", 3}};
  // 39 attributes: 30 predictors, treatment, six-month score and 7 others.
  s.extraColumns = {"HUV_BLN", "HUV_6M", "SITE", "ENROLLMENT_YEAR", "BMI", "SNOT22_3M_TOTAL",
                    "SURGEON_ID"};
  s.cleanClassOne = 124;
  s.seed = 3001;
  return s;
}

RawCohort generate_shaped(const CohortShape& shape, const Schema& schema,
                          const IngestColumns& columns) {
  Index nullTokens = 0;
  for (const auto& [_, c] : shape.nullCensus) nullTokens += c;
  const Index kept = shape.expected_rows_out();
  if (kept < 0 || shape.surgical > shape.rowsTotal || nullTokens < shape.nullRows ||
      nullTokens - shape.nullRows > shape.noFollowUp * static_cast<Index>(schema.size())) {
    throw Error(ErrorCode::InvalidArgument, "inconsistent cohort shape");
  }
  std::mt19937_64 rng(shape.seed);

  // Survivors get exact class counts; every other row is filler whose label
  // never reaches the cleaned output.
  Block core = draw_block(kept, shape.cleanClassOne, shape.signalStrength, schema, rng);
  const Index filler = shape.rowsTotal - kept;
  Block extra = draw_block(filler, filler / 2, shape.signalStrength, schema, rng);

  enum class Role { Kept, NullRow, NoFollowUp, NonSurgical };
  struct Pending {
    Role role;
    std::vector<std::string> features;
    double sixMonth;
  };
  std::vector<Pending> rows;
  for (Index i = 0; i < kept; ++i) {
    rows.push_back({Role::Kept, std::move(core.featureText[static_cast<std::size_t>(i)]),
                    core.sixMonth[static_cast<std::size_t>(i)]});
  }
  for (Index i = 0; i < filler; ++i) {
    Role role = i < shape.nullRows                        ? Role::NullRow
                : i < shape.nullRows + shape.noFollowUp   ? Role::NoFollowUp
                                                          : Role::NonSurgical;
    rows.push_back({role, std::move(extra.featureText[static_cast<std::size_t>(i)]),
                    extra.sixMonth[static_cast<std::size_t>(i)]});
  }

  // Null placement: one token per null row first, the rest on no-follow-up rows.
  std::vector<std::size_t> tokens;
  for (const auto& [name, count] : shape.nullCensus) {
    const auto idx = schema.index_of(name);
    if (!idx) throw Error(ErrorCode::UnknownFeature, "null census names unknown feature " + name);
    for (Index c = 0; c < count; ++c) tokens.push_back(*idx);
  }
  std::shuffle(tokens.begin(), tokens.end(), rng);
  const std::size_t nullStart = static_cast<std::size_t>(kept);
  for (Index t = 0; t < shape.nullRows; ++t) {
    rows[nullStart + static_cast<std::size_t>(t)].features[tokens[static_cast<std::size_t>(t)]].clear();
  }
  const std::size_t nfStart = nullStart + static_cast<std::size_t>(shape.nullRows);
  std::uniform_int_distribution<Index> pickNf(0, std::max<Index>(shape.noFollowUp - 1, 0));
  for (std::size_t t = static_cast<std::size_t>(shape.nullRows); t < tokens.size(); ++t) {
    while (true) {
      auto& cells = rows[nfStart + static_cast<std::size_t>(pickNf(rng))].features;
      if (!cells[tokens[t]].empty()) {
        cells[tokens[t]].clear();
        break;
      }
    }
  }

  std::shuffle(rows.begin(), rows.end(), rng);

  RawCohort raw;
  raw.provenance = shape.provenance;
  raw.columns.push_back(columns.id);
  raw.columns.push_back(columns.treatment);
  for (const auto& f : schema.features()) raw.columns.push_back(f.name);
  raw.columns.push_back(columns.followUp);
  for (const auto& c : shape.extraColumns) raw.columns.push_back(c);
  std::uniform_int_distribution<int> filler3(1, 999);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& p = rows[i];
    std::vector<std::string> row;
    row.push_back(pad_id(shape.provenance + "-", static_cast<Index>(i)));
    row.push_back(p.role == Role::NonSurgical ? "Medical therapy" : columns.surgeryValue);
    for (auto& cell : p.features) row.push_back(std::move(cell));
    row.push_back(p.role == Role::NoFollowUp ? "" : format_number(p.sixMonth));
    for (std::size_t e = 0; e < shape.extraColumns.size(); ++e) {
      row.push_back(std::to_string(filler3(rng)));
    }
    raw.rows.push_back(std::move(row));
  }
  return raw;
}

}  // namespace crs
