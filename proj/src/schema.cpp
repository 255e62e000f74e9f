#include "crs/schema.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "crs/error.hpp"

namespace crs {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::ParseError, "schema line " + std::to_string(line) + ": " + what);
}

double parse_double(std::string_view text, std::size_t line) {
  std::string s(trim(text));
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) parse_fail(line, "bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    parse_fail(line, "bad number '" + s + "'");
  }
}

}  // namespace

std::string normalize_label(std::string_view text) {
  std::string out(trim(text));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

int FeatureSpec::encode(std::string_view text) const {
  if (!is_categorical()) {
    throw Error(ErrorCode::InvalidArgument, name + " is not categorical");
  }
  const std::string key = normalize_label(text);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (normalize_label(labels[i]) == key) return static_cast<int>(i);
  }
  throw Error(ErrorCode::UnknownLabel,
              "unknown label '" + std::string(text) + "' for feature " + name);
}

const std::string& FeatureSpec::decode(int code) const {
  if (code < 0 || static_cast<std::size_t>(code) >= labels.size()) {
    throw Error(ErrorCode::UnknownLabel,
                "code " + std::to_string(code) + " not in dictionary of " + name);
  }
  return labels[static_cast<std::size_t>(code)];
}

bool FeatureSpec::has_code(double value) const {
  if (!std::isfinite(value) || value != std::floor(value)) return false;
  return value >= 0.0 && value < static_cast<double>(labels.size());
}

Schema::Schema(std::vector<FeatureSpec> features) : features_(std::move(features)) {
  std::set<std::string> seen;
  for (const auto& f : features_) {
    if (!seen.insert(f.name).second) {
      throw Error(ErrorCode::ParseError, "duplicate feature " + f.name);
    }
    if (f.is_categorical()) {
      if (f.labels.size() < 2) {
        throw Error(ErrorCode::ParseError, f.name + " needs at least two labels");
      }
      std::set<std::string> norm;
      for (const auto& l : f.labels) {
        if (!norm.insert(normalize_label(l)).second) {
          throw Error(ErrorCode::ParseError, f.name + " repeats label '" + l + "'");
        }
      }
    } else if (!(f.range.lo <= f.range.hi)) {
      throw Error(ErrorCode::ParseError, f.name + " has an empty range");
    }
  }
}

Schema Schema::parse(std::string_view text) {
  std::vector<FeatureSpec> features;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineNo = 0;
  while (std::getline(in, raw)) {
    ++lineNo;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;

    const auto colon = line.find(':');
    if (colon == std::string_view::npos) parse_fail(lineNo, "expected 'NAME : kind ...'");
    FeatureSpec spec;
    spec.name = std::string(trim(line.substr(0, colon)));
    if (spec.name.empty()) parse_fail(lineNo, "empty feature name");
    std::string_view rest = trim(line.substr(colon + 1));

    if (rest.starts_with("continuous")) {
      spec.kind = FeatureKind::Continuous;
      rest = trim(rest.substr(std::string_view("continuous").size()));
      if (rest.size() < 2 || rest.front() != '[' || rest.back() != ']') {
        parse_fail(lineNo, "continuous feature needs a [lo, hi] range");
      }
      rest = rest.substr(1, rest.size() - 2);
      const auto comma = rest.find(',');
      if (comma == std::string_view::npos) parse_fail(lineNo, "range needs two bounds");
      spec.range.lo = parse_double(rest.substr(0, comma), lineNo);
      spec.range.hi = parse_double(rest.substr(comma + 1), lineNo);
    } else if (rest.starts_with("categorical")) {
      spec.kind = FeatureKind::Categorical;
      rest = trim(rest.substr(std::string_view("categorical").size()));
      if (rest.size() < 2 || rest.front() != '{' || rest.back() != '}') {
        parse_fail(lineNo, "categorical feature needs a {label, ...} list");
      }
      rest = rest.substr(1, rest.size() - 2);
      while (true) {
        const auto comma = rest.find(',');
        std::string_view item = trim(rest.substr(0, comma));
        if (item.empty()) parse_fail(lineNo, "empty label");
        spec.labels.emplace_back(item);
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
      }
    } else {
      parse_fail(lineNo, "unknown kind in '" + std::string(rest) + "'");
    }
    features.push_back(std::move(spec));
  }
  try {
    return Schema(std::move(features));
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, std::string("schema: ") + e.what());
  }
}

Schema Schema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open schema " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string Schema::serialize() const {
  std::ostringstream os;
  for (const auto& f : features_) {
    os << f.name << " : ";
    if (f.is_categorical()) {
      os << "categorical {";
      for (std::size_t i = 0; i < f.labels.size(); ++i) {
        if (i) os << ", ";
        os << f.labels[i];
      }
      os << "}\n";
    } else {
      os << "continuous [" << format_number(f.range.lo) << ", " << format_number(f.range.hi)
         << "]\n";
    }
  }
  return os.str();
}

std::optional<std::size_t> Schema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < features_.size(); ++i) {
    if (features_[i].name == name) return i;
  }
  return std::nullopt;
}

const FeatureSpec& Schema::at(std::string_view name) const {
  auto idx = index_of(name);
  if (!idx) throw Error(ErrorCode::UnknownFeature, "unknown feature " + std::string(name));
  return features_[*idx];
}

std::vector<std::string> Schema::names() const {
  std::vector<std::string> out;
  out.reserve(features_.size());
  for (const auto& f : features_) out.push_back(f.name);
  return out;
}

bool Schema::operator==(const Schema& other) const {
  if (features_.size() != other.features_.size()) return false;
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const auto& a = features_[i];
    const auto& b = other.features_[i];
    if (a.name != b.name || a.kind != b.kind || a.labels != b.labels) return false;
    if (!a.is_categorical() && (a.range.lo != b.range.lo || a.range.hi != b.range.hi)) return false;
  }
  return true;
}

OutcomeLabel label_outcome(double baseline, std::optional<double> sixMonth) {
  if (!sixMonth) {
    throw Error(ErrorCode::MissingFollowUp, "six-month SNOT-22 score is missing");
  }
  const ValueRange scale{kSnotMin, kSnotMax};
  if (!scale.contains(baseline) || !scale.contains(*sixMonth)) {
    throw Error(ErrorCode::InvalidArgument, "SNOT-22 score outside [0,110]");
  }
  OutcomeLabel out;
  out.delta = baseline - *sixMonth;
  // Scores are recorded to at most a few decimals; absorb binary rounding so
  // that e.g. 30 - 21.1 lands on the inclusive boundary.
  out.value = out.delta >= kMcid - 1e-9 ? 1 : 0;
  return out;
}

std::vector<Violation> validate_record(const PatientRecord& record, const Schema& schema) {
  std::vector<Violation> out;
  for (const auto& f : schema.features()) {
    auto it = record.values.find(f.name);
    if (it == record.values.end()) {
      out.push_back({f.name, "missing"});
      continue;
    }
    const double v = it->second;
    if (!std::isfinite(v)) {
      out.push_back({f.name, "not a finite number"});
    } else if (f.is_categorical()) {
      if (!f.has_code(v)) out.push_back({f.name, "code not in dictionary"});
    } else if (!f.range.contains(v)) {
      out.push_back({f.name, "out of range [" + format_number(f.range.lo) + "," +
                                 format_number(f.range.hi) + "]"});
    }
  }
  for (const auto& [name, value] : record.values) {
    if (!schema.index_of(name)) out.push_back({name, "unknown feature"});
  }
  const ValueRange scale{kSnotMin, kSnotMax};
  if (!schema.index_of(kBaselineColumn) && !scale.contains(record.snot22Baseline)) {
    out.push_back({std::string(kBaselineColumn), "baseline score out of range [0,110]"});
  }
  if (record.snot22SixMonth && !scale.contains(*record.snot22SixMonth)) {
    out.push_back({"SNOT22_6M_TOTAL", "six-month score out of range [0,110]"});
  }
  return out;
}

}  // namespace crs
