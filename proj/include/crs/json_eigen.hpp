#pragma once

#include <Eigen/Dense>
#include <vector>

#include "json.hpp"

namespace crs {

using Json = nlohmann::json;

template <typename Derived>
Json to_json_array(const Eigen::DenseBase<Derived>& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v.derived().coeff(i));
  return out;
}

/// Row-major flattening with explicit shape.
template <typename Derived>
Json to_json_matrix(const Eigen::DenseBase<Derived>& m) {
  Json data = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m.derived().coeff(r, c));
  }
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Eigen::VectorXd vector_from_json(const Json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

inline Eigen::MatrixXd matrix_from_json(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const Json& data = j.at("data");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = data.at(static_cast<std::size_t>(r * cols + c)).get<double>();
    }
  }
  return m;
}

}  // namespace crs
