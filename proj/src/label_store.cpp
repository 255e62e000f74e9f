#include "crs/label_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "crs/csv.hpp"
#include "crs/error.hpp"

namespace crs {

namespace {

Json label_json(const ExpertLabel& l) {
  return Json{{"rater", l.rater},         {"caseId", l.caseId},       {"call", l.call},
              {"confidence", l.confidence}, {"timestamp", l.timestamp}, {"revision", l.revision}};
}

ExpertLabel label_from(const Json& j) {
  return ExpertLabel{j.at("rater").get<std::string>(), j.at("caseId").get<std::string>(),
                     j.at("call").get<int>(),         j.at("confidence").get<int>(),
                     j.at("timestamp").get<std::string>(), j.at("revision").get<int>()};
}

Json session_json(const SessionRecord& s) {
  return Json{{"rater", s.rater}, {"cursor", s.cursor}, {"updated", s.updated}};
}

SessionRecord session_from(const Json& j) {
  return SessionRecord{j.at("rater").get<std::string>(), j.at("cursor").get<std::string>(),
                       j.at("updated").get<std::string>()};
}

void write_all(int fd, const std::string& data, const std::filesystem::path& path) {
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::IoError, "write failed on " + path.string() + ": " + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

/// Writes `text` durably: temp file, fsync, rename over the target.
void write_durable(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw Error(ErrorCode::IoError, "cannot open " + tmp + ": " + std::strerror(errno));
  write_all(fd, text, tmp);
  ::fsync(fd);
  ::close(fd);
  std::filesystem::rename(tmp, path);
}

}  // namespace

Json LabelEvent::to_json() const {
  Json j{{"seq", seq}, {"type", type}};
  if (type == "label") {
    j["label"] = label_json(label);
  } else {
    j["session"] = session_json(session);
  }
  return j;
}

LabelEvent LabelEvent::from_json(const Json& j) {
  LabelEvent e;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.type = j.at("type").get<std::string>();
  if (e.type == "label") {
    e.label = label_from(j.at("label"));
  } else if (e.type == "session") {
    e.session = session_from(j.at("session"));
  } else {
    throw Error(ErrorCode::ParseError, "unknown event type '" + e.type + "'");
  }
  return e;
}

LabelStore::LabelStore(std::filesystem::path dir, Options options)
    : dir_(std::move(dir)), options_(std::move(options)), persistent_(true) {
  std::filesystem::create_directories(dir_);
  std::uint64_t covered = 0;
  if (std::filesystem::exists(snapshot_path())) {
    try {
      const Json snap = Json::parse(read_text(snapshot_path()));
      load_state(snap.at("state"));
      covered = snap.at("seq").get<std::uint64_t>();
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ParseError, "corrupt label snapshot: " + std::string(e.what()));
    }
  }
  if (std::filesystem::exists(log_path())) {
    for (const auto& e : read_log(log_path())) {
      if (e.seq > covered) apply(e);
    }
  }
}

LabelStore::LabelStore(LabelStore&& other) noexcept
    : dir_(std::move(other.dir_)),
      options_(std::move(other.options_)),
      persistent_(other.persistent_),
      seq_(other.seq_),
      sinceSnapshot_(other.sinceSnapshot_),
      labels_(std::move(other.labels_)),
      sessions_(std::move(other.sessions_)) {}

std::vector<LabelEvent> LabelStore::read_log(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  std::vector<LabelEvent> events;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) break;  // torn tail from an interrupted append
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      events.push_back(LabelEvent::from_json(Json::parse(line)));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ParseError, "corrupt label log line: " + std::string(e.what()));
    }
  }
  return events;
}

LabelStore LabelStore::replay(const std::vector<LabelEvent>& events) {
  LabelStore store;
  for (const auto& e : events) store.apply(e);
  return store;
}

void LabelStore::apply(const LabelEvent& e) {
  if (e.type == "label") {
    labels_[e.label.rater][e.label.caseId].push_back(e.label);
  } else {
    sessions_[e.session.rater] = e.session;
  }
  seq_ = std::max(seq_, e.seq);
}

void LabelStore::append(const LabelEvent& e) {
  if (!persistent_) return;
  const int fd = ::open(log_path().c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) {
    throw Error(ErrorCode::IoError, "cannot open " + log_path().string() + ": " + std::strerror(errno));
  }
  try {
    write_all(fd, e.to_json().dump() + "\n", log_path());
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::fsync(fd);
  ::close(fd);
}

void LabelStore::check_rater(const std::string& rater) const {
  if (rater.empty() || (!options_.raters.empty() && !options_.raters.contains(rater))) {
    throw Error(ErrorCode::UnknownRater, "unknown rater '" + rater + "'");
  }
}

ExpertLabel LabelStore::submit(const std::string& rater, const std::string& caseId, int call,
                               int confidence, const std::string& timestamp) {
  check_rater(rater);
  if (caseId.empty() || (!options_.cases.empty() && !options_.cases.contains(caseId))) {
    throw Error(ErrorCode::UnknownCase, "unknown case '" + caseId + "'");
  }
  std::lock_guard lock(mu_);
  ExpertLabel label{rater, caseId, call, confidence, timestamp, 0};
  validate_label(label);
  const auto r = labels_.find(rater);
  if (r != labels_.end()) {
    const auto c = r->second.find(caseId);
    if (c != r->second.end()) label.revision = static_cast<int>(c->second.size());
  }
  LabelEvent e;
  e.seq = seq_ + 1;
  e.type = "label";
  e.label = label;
  append(e);
  apply(e);
  if (persistent_ && ++sinceSnapshot_ >= static_cast<std::uint64_t>(options_.snapshotEvery)) {
    sinceSnapshot_ = 0;
    write_durable(snapshot_path(), Json{{"seq", seq_}, {"state", state_unlocked()}}.dump());
  }
  return label;
}

SessionRecord LabelStore::put_session(const std::string& rater, const std::string& cursor,
                                      const std::string& timestamp) {
  check_rater(rater);
  if (!cursor.empty() && !options_.cases.empty() && !options_.cases.contains(cursor)) {
    throw Error(ErrorCode::UnknownCase, "unknown case '" + cursor + "'");
  }
  std::lock_guard lock(mu_);
  LabelEvent e;
  e.seq = seq_ + 1;
  e.type = "session";
  e.session = SessionRecord{rater, cursor, timestamp};
  append(e);
  apply(e);
  return e.session;
}

std::optional<SessionRecord> LabelStore::session(const std::string& rater) const {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(rater);
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

std::vector<ExpertLabel> LabelStore::history(const std::string& rater, const std::string& caseId) const {
  std::lock_guard lock(mu_);
  const auto r = labels_.find(rater);
  if (r == labels_.end()) return {};
  const auto c = r->second.find(caseId);
  return c == r->second.end() ? std::vector<ExpertLabel>{} : c->second;
}

std::vector<ExpertLabel> LabelStore::latest(const std::string& rater) const {
  std::lock_guard lock(mu_);
  std::vector<ExpertLabel> out;
  for (const auto& [who, byCase] : labels_) {
    if (!rater.empty() && who != rater) continue;
    for (const auto& [id, revs] : byCase) out.push_back(revs.back());
  }
  return out;
}

std::vector<ExpertLabel> LabelStore::all_revisions() const {
  std::lock_guard lock(mu_);
  std::vector<ExpertLabel> out;
  for (const auto& [who, byCase] : labels_)
    for (const auto& [id, revs] : byCase) out.insert(out.end(), revs.begin(), revs.end());
  return out;
}

std::uint64_t LabelStore::sequence() const {
  std::lock_guard lock(mu_);
  return seq_;
}

Json LabelStore::state_json() const {
  std::lock_guard lock(mu_);
  return state_unlocked();
}

Json LabelStore::state_unlocked() const {
  Json labels = Json::object();
  for (const auto& [who, byCase] : labels_) {
    Json cases = Json::object();
    for (const auto& [id, revs] : byCase) {
      Json arr = Json::array();
      for (const auto& l : revs) arr.push_back(label_json(l));
      cases[id] = arr;
    }
    labels[who] = cases;
  }
  Json sessions = Json::object();
  for (const auto& [who, s] : sessions_) sessions[who] = session_json(s);
  return Json{{"seq", seq_}, {"labels", labels}, {"sessions", sessions}};
}

void LabelStore::load_state(const Json& state) {
  labels_.clear();
  sessions_.clear();
  for (const auto& [who, byCase] : state.at("labels").items()) {
    for (const auto& [id, revs] : byCase.items()) {
      for (const auto& l : revs) labels_[who][id].push_back(label_from(l));
    }
  }
  for (const auto& [who, s] : state.at("sessions").items()) sessions_[who] = session_from(s);
  seq_ = state.at("seq").get<std::uint64_t>();
}

void LabelStore::snapshot() {
  std::lock_guard lock(mu_);
  if (!persistent_) return;
  sinceSnapshot_ = 0;
  write_durable(snapshot_path(), Json{{"seq", seq_}, {"state", state_unlocked()}}.dump());
}

}  // namespace crs
