#pragma once

// Append-only, hash-chained audit ledger.
//
// Wire format (one JSON object per line, keys in this order):
//   {"seq":N,"timestamp":"...","type":"...","payload_digest":"<hex>",
//    "prev_hash":"<hex>","hash":"<hex>","payload":{...}}
// payload_digest = SHA-256(canonical payload), where canonical means
// nlohmann::json::dump() with sorted keys and no whitespace.
// hash = SHA-256(seq "|" timestamp "|" type "|" payload_digest "|" prev_hash)
// with seq in decimal. The first record's prev_hash is 64 zeros. seq starts
// at 1 and increases by exactly one per record.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qocdao/errors.hpp"
#include "qocdao/hash.hpp"

namespace qocdao {

using Clock = std::function<std::string()>;

// ISO-8601 UTC with millisecond precision, e.g. 2025-01-31T12:00:00.000Z.
inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

// Clock that yields 2000-01-01T00:00:00.000Z plus one second per call.
// Used wherever byte-identical output is required.
inline Clock counting_clock() {
  auto counter = std::make_shared<std::int64_t>(0);
  return [counter] {
    std::time_t t = 946684800 + (*counter)++;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S.000Z", &tm);
    return std::string(buf);
  };
}

enum class LedgerEvent {
  VoteOpened,
  BallotSubmitted,
  VoteClosed,
  OutliersApplied,
  RecommendationIssued,
  DecisionRecorded,
  ReportEmitted,
};

inline std::string_view to_string(LedgerEvent e) {
  switch (e) {
    case LedgerEvent::VoteOpened: return "vote_opened";
    case LedgerEvent::BallotSubmitted: return "ballot_submitted";
    case LedgerEvent::VoteClosed: return "vote_closed";
    case LedgerEvent::OutliersApplied: return "outliers_applied";
    case LedgerEvent::RecommendationIssued: return "recommendation_issued";
    case LedgerEvent::DecisionRecorded: return "decision_recorded";
    case LedgerEvent::ReportEmitted: return "report_emitted";
  }
  return "unknown";
}

struct LedgerRecord {
  std::uint64_t seq = 0;
  std::string timestamp;
  std::string type;
  std::string payload_digest;
  std::string prev_hash;
  std::string hash;
  nlohmann::json payload;

  std::string compute_hash() const {
    return sha256_hex(std::to_string(seq) + "|" + timestamp + "|" + type + "|" + payload_digest + "|" + prev_hash);
  }

  std::string to_line() const {
    nlohmann::ordered_json j;
    j["seq"] = seq;
    j["timestamp"] = timestamp;
    j["type"] = type;
    j["payload_digest"] = payload_digest;
    j["prev_hash"] = prev_hash;
    j["hash"] = hash;
    j["payload"] = payload;
    return j.dump();
  }

  static LedgerRecord from_line(std::string_view line) {
    auto j = nlohmann::json::parse(line);
    LedgerRecord r;
    r.seq = j.at("seq").get<std::uint64_t>();
    r.timestamp = j.at("timestamp").get<std::string>();
    r.type = j.at("type").get<std::string>();
    r.payload_digest = j.at("payload_digest").get<std::string>();
    r.prev_hash = j.at("prev_hash").get<std::string>();
    r.hash = j.at("hash").get<std::string>();
    r.payload = j.at("payload");
    return r;
  }
};

struct LedgerVerification {
  bool valid = true;
  std::optional<std::uint64_t> first_broken_seq;
  std::string reason;
};

// Recomputes the chain. Reports the first record whose sequence number,
// payload digest, back-link or own hash does not check out.
inline LedgerVerification verify_ledger(std::span<const LedgerRecord> records) {
  std::string prev = kZeroHash;
  std::uint64_t expected_seq = 1;
  for (const auto& r : records) {
    auto broken = [&](std::string why) { return LedgerVerification{false, r.seq, std::move(why)}; };
    if (r.seq != expected_seq) return broken("sequence gap: expected " + std::to_string(expected_seq));
    if (sha256_hex(r.payload.dump()) != r.payload_digest) return broken("payload digest mismatch");
    if (r.prev_hash != prev) return broken("previous-hash link mismatch");
    if (r.compute_hash() != r.hash) return broken("record hash mismatch");
    prev = r.hash;
    ++expected_seq;
  }
  return {};
}

class Ledger {
 public:
  const LedgerRecord& append(LedgerEvent type, nlohmann::json payload, std::string timestamp) {
    LedgerRecord r;
    r.seq = records_.size() + 1;
    r.timestamp = std::move(timestamp);
    r.type = std::string(to_string(type));
    r.payload = std::move(payload);
    r.payload_digest = sha256_hex(r.payload.dump());
    r.prev_hash = records_.empty() ? kZeroHash : records_.back().hash;
    r.hash = r.compute_hash();
    records_.push_back(std::move(r));
    return records_.back();
  }

  const std::vector<LedgerRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  LedgerVerification verify() const { return verify_ledger(records_); }

  void write(std::ostream& os) const {
    for (const auto& r : records_) os << r.to_line() << '\n';
  }

  std::string to_ndjson() const {
    std::ostringstream os;
    write(os);
    return os.str();
  }

 private:
  std::vector<LedgerRecord> records_;
};

inline std::vector<LedgerRecord> read_ledger(std::istream& in, const std::string& source = "ledger") {
  std::vector<LedgerRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(LedgerRecord::from_line(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, n, e.what());
    }
  }
  return out;
}

}  // namespace qocdao
