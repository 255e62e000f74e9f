#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "crs/bench.hpp"
#include "crs/json_eigen.hpp"

namespace crs {

struct SessionRecord {
  std::string rater;
  std::string cursor;  // case id the rater should resume at
  std::string updated;
};

/// One line of the event log.
struct LabelEvent {
  std::uint64_t seq = 0;
  std::string type;  // "label" | "session"
  ExpertLabel label;
  SessionRecord session;

  Json to_json() const;
  static LabelEvent from_json(const Json& j);
};

/// Expert labels and session cursors, event-sourced. Every change is appended
/// (and fsynced) to <dir>/events.jsonl before it becomes visible; a snapshot
/// in <dir>/snapshot.json is written every `snapshotEvery` events so reopening
/// replays only the log tail. The log itself is never rewritten.
class LabelStore {
 public:
  struct Options {
    std::set<std::string> raters;  // empty = accept any rater
    std::set<std::string> cases;   // empty = accept any case
    int snapshotEvery = 50;
  };

  /// In-memory store without persistence.
  LabelStore() = default;
  LabelStore(std::filesystem::path dir, Options options);
  LabelStore(LabelStore&& other) noexcept;
  LabelStore& operator=(LabelStore&&) = delete;

  /// Appends a new revision (0 for the first call on a case). Throws
  /// UnknownRater, UnknownCase, MalformedConfidence, InvalidArgument.
  ExpertLabel submit(const std::string& rater, const std::string& caseId, int call, int confidence,
                     const std::string& timestamp);
  SessionRecord put_session(const std::string& rater, const std::string& cursor,
                            const std::string& timestamp);

  std::optional<SessionRecord> session(const std::string& rater) const;
  /// Every revision for (rater, case), oldest first.
  std::vector<ExpertLabel> history(const std::string& rater, const std::string& caseId) const;
  /// Latest revision per case for one rater (all raters when empty).
  std::vector<ExpertLabel> latest(const std::string& rater = "") const;
  std::vector<ExpertLabel> all_revisions() const;
  std::uint64_t sequence() const;

  /// Canonical JSON of the full state; equal states serialize identically.
  Json state_json() const;

  void snapshot();

  /// Applies events in order to an empty in-memory store.
  static LabelStore replay(const std::vector<LabelEvent>& events);
  /// Parses an event log; a torn final line (no newline) is ignored.
  static std::vector<LabelEvent> read_log(const std::filesystem::path& path);

  std::filesystem::path log_path() const { return dir_ / "events.jsonl"; }
  std::filesystem::path snapshot_path() const { return dir_ / "snapshot.json"; }

 private:
  void check_rater(const std::string& rater) const;
  void apply(const LabelEvent& e);
  void append(const LabelEvent& e);
  void load_state(const Json& state);
  Json state_unlocked() const;

  mutable std::mutex mu_;
  std::filesystem::path dir_;
  Options options_;
  bool persistent_ = false;
  std::uint64_t seq_ = 0;
  std::uint64_t sinceSnapshot_ = 0;
  std::map<std::string, std::map<std::string, std::vector<ExpertLabel>>> labels_;  // rater -> case
  std::map<std::string, SessionRecord> sessions_;
};

}  // namespace crs
