#include "crs/dataset.hpp"

#include <charconv>
#include <cmath>
#include <unordered_map>

#include "crs/error.hpp"

namespace crs {

FeatureInfo FeatureInfo::from_schema(const Schema& schema) {
  FeatureInfo info;
  for (const auto& f : schema.features()) {
    info.names.push_back(f.name);
    info.kinds.push_back(f.kind);
    info.cardinalities.push_back(f.is_categorical() ? static_cast<int>(f.cardinality()) : 0);
  }
  return info;
}

FeatureInfo FeatureInfo::all_continuous(Index d) {
  FeatureInfo info;
  for (Index j = 0; j < d; ++j) {
    info.names.push_back("x" + std::to_string(j));
    info.kinds.push_back(FeatureKind::Continuous);
    info.cardinalities.push_back(0);
  }
  return info;
}

LabeledDataset LabeledDataset::subset(std::span<const Index> rows) const {
  LabeledDataset out;
  out.features = features;
  out.X.resize(static_cast<Index>(rows.size()), X.cols());
  out.y.resize(static_cast<Index>(rows.size()));
  out.ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Index r = rows[i];
    out.X.row(static_cast<Index>(i)) = X.row(r);
    out.y(static_cast<Index>(i)) = y(r);
    out.ids.push_back(ids.empty() ? std::to_string(r) : ids[static_cast<std::size_t>(r)]);
  }
  return out;
}

LabeledDataset LabeledDataset::subset_by_id(std::span<const std::string> wanted) const {
  std::unordered_map<std::string, Index> where;
  for (std::size_t i = 0; i < ids.size(); ++i) where.emplace(ids[i], static_cast<Index>(i));
  std::vector<Index> rows;
  rows.reserve(wanted.size());
  for (const auto& id : wanted) {
    auto it = where.find(id);
    if (it == where.end()) throw Error(ErrorCode::UnknownCase, "unknown id " + id);
    rows.push_back(it->second);
  }
  return subset(rows);
}

std::string format_number(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 1e15) {
    return std::to_string(static_cast<long long>(v));
  }
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

CsvTable LabeledDataset::to_csv() const {
  CsvTable t;
  t.header.emplace_back(kIdColumn);
  for (const auto& n : features.names) t.header.push_back(n);
  t.header.emplace_back(kOutcomeColumn);
  for (Index i = 0; i < rows(); ++i) {
    std::vector<std::string> row;
    row.reserve(t.header.size());
    row.push_back(ids[static_cast<std::size_t>(i)]);
    for (Index j = 0; j < cols(); ++j) row.push_back(format_number(X(i, j)));
    row.push_back(std::to_string(y(i)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

LabeledDataset LabeledDataset::from_csv(const CsvTable& table, const Schema& schema) {
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < table.header.size(); ++i) col.emplace(table.header[i], i);
  auto need = [&](std::string_view name) {
    auto it = col.find(std::string(name));
    if (it == col.end()) {
      throw Error(ErrorCode::SchemaMismatch, "dataset lacks column " + std::string(name));
    }
    return it->second;
  };
  const std::size_t idCol = need(kIdColumn);
  const std::size_t yCol = need(kOutcomeColumn);
  std::vector<std::size_t> featCols;
  for (const auto& f : schema.features()) featCols.push_back(need(f.name));

  LabeledDataset ds;
  ds.features = FeatureInfo::from_schema(schema);
  const auto n = static_cast<Index>(table.rows.size());
  ds.X.resize(n, static_cast<Index>(featCols.size()));
  ds.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    ds.ids.push_back(row[idCol]);
    for (std::size_t j = 0; j < featCols.size(); ++j) {
      const std::string& cell = row[featCols[j]];
      try {
        ds.X(i, static_cast<Index>(j)) = std::stod(cell);
      } catch (const std::logic_error&) {
        throw Error(ErrorCode::ParseError, "non-numeric cell '" + cell + "' in " +
                                               schema[j].name + " for " + row[idCol]);
      }
    }
    const std::string& label = row[yCol];
    if (label != "0" && label != "1") {
      throw Error(ErrorCode::ParseError, "outcome must be 0 or 1, got '" + label + "'");
    }
    ds.y(i) = label == "1" ? 1 : 0;
  }
  return ds;
}

LabeledDataset make_dataset(Eigen::MatrixXd X, Eigen::VectorXi y) {
  if (X.rows() != y.size()) {
    throw Error(ErrorCode::LengthMismatch, "feature rows and labels differ in length");
  }
  LabeledDataset ds;
  ds.features = FeatureInfo::all_continuous(X.cols());
  ds.X = std::move(X);
  ds.y = std::move(y);
  for (Index i = 0; i < ds.X.rows(); ++i) ds.ids.push_back("r" + std::to_string(i));
  return ds;
}

}  // namespace crs
