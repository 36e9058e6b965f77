#pragma once

// Call-record data model: one anonymized log row per call leg seen by a
// TouchPal-side user, the ordered log, JSONL/meta I/O, validation, and
// per-party / per-pair history lookups.

#include <algorithm>
#include <array>
#include <charconv>
#include <compare>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "malcall/error.hpp"

namespace malcall {

// Opaque 128-bit number identifier, written as 32 lowercase hex characters.
class PhoneId {
public:
  PhoneId() = default;
  explicit PhoneId(const std::array<std::uint8_t, 16>& bytes) : bytes_(bytes) {}

  static PhoneId from_words(std::uint64_t hi, std::uint64_t lo) {
    std::array<std::uint8_t, 16> b{};
    for (int i = 0; i < 8; ++i) {
      b[i] = static_cast<std::uint8_t>(hi >> (56 - 8 * i));
      b[8 + i] = static_cast<std::uint8_t>(lo >> (56 - 8 * i));
    }
    return PhoneId(b);
  }

  static std::optional<PhoneId> parse(std::string_view hex) {
    if (hex.size() != 32) return std::nullopt;
    std::array<std::uint8_t, 16> b{};
    for (std::size_t i = 0; i < 32; ++i) {
      const char c = hex[i];
      int v;
      if (c >= '0' && c <= '9') v = c - '0';
      else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
      else return std::nullopt;
      b[i / 2] = static_cast<std::uint8_t>(b[i / 2] | (i % 2 == 0 ? v << 4 : v));
    }
    return PhoneId(b);
  }

  std::string hex() const {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(32, '0');
    for (std::size_t i = 0; i < 16; ++i) {
      s[2 * i] = digits[bytes_[i] >> 4];
      s[2 * i + 1] = digits[bytes_[i] & 0xf];
    }
    return s;
  }

  const std::array<std::uint8_t, 16>& bytes() const noexcept { return bytes_; }

  std::uint64_t hash() const noexcept {
    std::uint64_t h = 0;
    for (int i = 0; i < 8; ++i) h = (h << 8) | bytes_[i];
    return h ^ (static_cast<std::uint64_t>(bytes_[15]) << 7);
  }

  auto operator<=>(const PhoneId&) const = default;

private:
  std::array<std::uint8_t, 16> bytes_{};
};

struct PhoneIdHash {
  std::size_t operator()(const PhoneId& p) const noexcept { return static_cast<std::size_t>(p.hash()); }
};

// Short province code, at most 7 characters, stored inline.
class Province {
public:
  static constexpr std::size_t kMaxLen = 7;

  Province() = default;

  static std::optional<Province> parse(std::string_view code) {
    if (code.empty() || code.size() > kMaxLen) return std::nullopt;
    Province p;
    std::copy(code.begin(), code.end(), p.chars_.begin());
    p.len_ = static_cast<std::uint8_t>(code.size());
    return p;
  }

  static Province of(std::string_view code) {
    auto p = parse(code);
    if (!p) throw ContractError("invalid province code '" + std::string(code) + "'");
    return *p;
  }

  std::string_view view() const noexcept { return {chars_.data(), len_}; }
  std::string str() const { return std::string(view()); }
  bool empty() const noexcept { return len_ == 0; }

  bool operator==(const Province& o) const noexcept { return view() == o.view(); }
  auto operator<=>(const Province& o) const noexcept { return view() <=> o.view(); }

private:
  std::array<char, kMaxLen> chars_{};
  std::uint8_t len_ = 0;
};

enum class CallTag : std::uint8_t { none, real_estate, harassment, delivery, fraud, sales };

constexpr bool is_malicious(CallTag tag) noexcept {
  return tag == CallTag::harassment || tag == CallTag::fraud;
}

inline std::string_view to_string(CallTag tag) {
  switch (tag) {
    case CallTag::none: return "none";
    case CallTag::real_estate: return "real_estate";
    case CallTag::harassment: return "harassment";
    case CallTag::delivery: return "delivery";
    case CallTag::fraud: return "fraud";
    case CallTag::sales: return "sales";
  }
  return "none";
}

inline std::optional<CallTag> parse_call_tag(std::string_view s) {
  for (auto t : {CallTag::none, CallTag::real_estate, CallTag::harassment, CallTag::delivery,
                 CallTag::fraud, CallTag::sales})
    if (to_string(t) == s) return t;
  return std::nullopt;
}

// Direction from the TouchPal user's perspective.
enum class CallType : std::uint8_t { incoming, outgoing };

inline std::string_view to_string(CallType t) { return t == CallType::incoming ? "incoming" : "outgoing"; }

struct CallRecord {
  PhoneId user_id;
  CallType call_type = CallType::incoming;
  PhoneId other_phone;
  Province other_province;
  Province user_province;
  std::int64_t call_date = 0;
  std::int64_t call_duration = 0;
  bool call_contact = false;
  CallTag call_tag = CallTag::none;
  std::uint64_t seq = 0;

  const PhoneId& caller() const noexcept { return call_type == CallType::incoming ? other_phone : user_id; }
  const PhoneId& callee() const noexcept { return call_type == CallType::incoming ? user_id : other_phone; }
  const Province& caller_province() const noexcept {
    return call_type == CallType::incoming ? other_province : user_province;
  }
  bool involves(const PhoneId& p) const noexcept { return user_id == p || other_phone == p; }
  const PhoneId& counterpart_of(const PhoneId& p) const noexcept { return user_id == p ? other_phone : user_id; }

  bool operator==(const CallRecord&) const = default;
};

// Total order used by every "before the record" computation.
inline bool record_before(const CallRecord& a, const CallRecord& b) noexcept {
  return a.call_date != b.call_date ? a.call_date < b.call_date : a.seq < b.seq;
}

struct LogMeta {
  std::vector<std::string> provinces;
  std::uint64_t seed = 0;
  std::int64_t start_time = 0;  // seconds since epoch of day 0, 00:00
  int days = 0;
  std::vector<PhoneId> touchpal_users;  // sorted
};

class CallLog {
public:
  CallLog() = default;
  CallLog(std::vector<CallRecord> records, LogMeta meta) : records_(std::move(records)), meta_(std::move(meta)) {
    std::sort(meta_.touchpal_users.begin(), meta_.touchpal_users.end());
    registry_.reserve(meta_.touchpal_users.size());
    for (const auto& p : meta_.touchpal_users) registry_.insert(p);
  }

  const std::vector<CallRecord>& records() const noexcept { return records_; }
  const LogMeta& meta() const noexcept { return meta_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const CallRecord& operator[](std::size_t i) const { return records_[i]; }

  bool is_touchpal(const PhoneId& p) const { return registry_.contains(p); }

  // The outgoing leg of a TouchPal-to-TouchPal call. Its incoming twin carries
  // the same call, so stream consumers count the call once through the twin.
  bool is_mirror(const CallRecord& r) const {
    return r.call_type == CallType::outgoing && is_touchpal(r.other_phone);
  }

private:
  std::vector<CallRecord> records_;
  LogMeta meta_;
  std::unordered_set<PhoneId, PhoneIdHash> registry_;
};

// ---------------------------------------------------------------------------
// Time decomposition

constexpr std::int64_t kSecondsPerDay = 86400;

constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) noexcept {
  return a / b - ((a % b != 0) && ((a < 0) != (b < 0)));
}

// 0 = Monday ... 6 = Sunday.
constexpr int weekday_of(std::int64_t t, std::int64_t tz_offset = 0) noexcept {
  const std::int64_t days = floor_div(t + tz_offset, kSecondsPerDay);
  return static_cast<int>(((days + 3) % 7 + 7) % 7);
}

constexpr int hour_of(std::int64_t t, std::int64_t tz_offset = 0) noexcept {
  const std::int64_t s = t + tz_offset;
  return static_cast<int>((s - floor_div(s, kSecondsPerDay) * kSecondsPerDay) / 3600);
}

// ---------------------------------------------------------------------------
// JSONL serialization

inline std::string serialize_record(const CallRecord& r) {
  std::string s;
  s.reserve(240);
  s += "{\"user_id\":\"";
  s += r.user_id.hex();
  s += "\",\"call_type\":\"";
  s += to_string(r.call_type);
  s += "\",\"other_phone\":\"";
  s += r.other_phone.hex();
  s += "\",\"other_province\":";
  s += nlohmann::json(r.other_province.str()).dump();
  s += ",\"user_province\":";
  s += nlohmann::json(r.user_province.str()).dump();
  s += ",\"call_date\":";
  s += std::to_string(r.call_date);
  s += ",\"call_duration\":";
  s += std::to_string(r.call_duration);
  s += ",\"call_contact\":";
  s += r.call_contact ? "true" : "false";
  s += ",\"call_tag\":\"";
  s += to_string(r.call_tag);
  s += "\",\"seq\":";
  s += std::to_string(r.seq);
  s += '}';
  return s;
}

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& obj, const char* name, std::size_t line) {
  auto it = obj.find(name);
  if (it == obj.end()) throw ParseError(line, name, "missing field");
  return *it;
}

inline std::string require_string(const nlohmann::json& obj, const char* name, std::size_t line) {
  const auto& v = require_field(obj, name, line);
  if (!v.is_string()) throw ParseError(line, name, "expected string");
  return v.get<std::string>();
}

inline std::int64_t require_int(const nlohmann::json& obj, const char* name, std::size_t line) {
  const auto& v = require_field(obj, name, line);
  if (!v.is_number_integer()) throw ParseError(line, name, "expected integer");
  if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX))
    throw ParseError(line, name, "integer out of range");
  return v.get<std::int64_t>();
}

inline PhoneId require_phone(const nlohmann::json& obj, const char* name, std::size_t line) {
  auto p = PhoneId::parse(require_string(obj, name, line));
  if (!p) throw ParseError(line, name, "expected 32 lowercase hex characters");
  return *p;
}

inline Province require_province(const nlohmann::json& obj, const char* name, std::size_t line) {
  auto p = Province::parse(require_string(obj, name, line));
  if (!p) throw ParseError(line, name, "province code must be 1-7 characters");
  return *p;
}

}  // namespace detail

// Parses one JSONL object. `line_no` is used only for error reporting.
inline CallRecord parse_record(std::string_view line, std::size_t line_no = 1) {
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(line_no, "<record>", std::string("malformed JSON: ") + e.what());
  }
  if (!obj.is_object()) throw ParseError(line_no, "<record>", "expected a JSON object");

  CallRecord r;
  r.user_id = detail::require_phone(obj, "user_id", line_no);
  const auto type = detail::require_string(obj, "call_type", line_no);
  if (type == "incoming") r.call_type = CallType::incoming;
  else if (type == "outgoing") r.call_type = CallType::outgoing;
  else throw ParseError(line_no, "call_type", "invalid value '" + type + "'");
  r.other_phone = detail::require_phone(obj, "other_phone", line_no);
  r.other_province = detail::require_province(obj, "other_province", line_no);
  r.user_province = detail::require_province(obj, "user_province", line_no);
  r.call_date = detail::require_int(obj, "call_date", line_no);
  if (r.call_date < 0) throw ParseError(line_no, "call_date", "must be >= 0");
  r.call_duration = detail::require_int(obj, "call_duration", line_no);
  if (r.call_duration < 0) throw ParseError(line_no, "call_duration", "negative duration");
  const auto& contact = detail::require_field(obj, "call_contact", line_no);
  if (!contact.is_boolean()) throw ParseError(line_no, "call_contact", "expected boolean");
  r.call_contact = contact.get<bool>();
  const auto tag = detail::require_string(obj, "call_tag", line_no);
  auto parsed_tag = parse_call_tag(tag);
  if (!parsed_tag) throw ParseError(line_no, "call_tag", "invalid value '" + tag + "'");
  r.call_tag = *parsed_tag;
  const auto seq = detail::require_int(obj, "seq", line_no);
  if (seq < 0) throw ParseError(line_no, "seq", "must be >= 0");
  r.seq = static_cast<std::uint64_t>(seq);
  if (r.user_id == r.other_phone) throw ParseError(line_no, "other_phone", "equals user_id");
  return r;
}

inline nlohmann::json meta_to_json(const LogMeta& m) {
  nlohmann::json users = nlohmann::json::array();
  for (const auto& p : m.touchpal_users) users.push_back(p.hex());
  return {{"provinces", m.provinces}, {"seed", m.seed},         {"start_time", m.start_time},
          {"days", m.days},           {"touchpal_users", users}};
}

inline LogMeta meta_from_json(const nlohmann::json& j) {
  LogMeta m;
  try {
    m.provinces = j.at("provinces").get<std::vector<std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.start_time = j.at("start_time").get<std::int64_t>();
    m.days = j.at("days").get<int>();
    for (const auto& s : j.at("touchpal_users")) {
      auto p = PhoneId::parse(s.get<std::string>());
      if (!p) throw ConfigError("meta: invalid touchpal user id '" + s.get<std::string>() + "'");
      m.touchpal_users.push_back(*p);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("meta: ") + e.what());
  }
  return m;
}

inline void write_jsonl(std::ostream& out, const CallLog& log) {
  for (const auto& r : log.records()) {
    out << serialize_record(r) << '\n';
  }
}

inline std::vector<CallRecord> read_jsonl(std::istream& in) {
  std::vector<CallRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    records.push_back(parse_record(line, line_no));
  }
  return records;
}

inline CallLog load_log(const std::string& jsonl_path, const std::string& meta_path) {
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw ConfigError("cannot open " + meta_path);
  nlohmann::json meta_json;
  try {
    meta_in >> meta_json;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(meta_path + ": " + e.what());
  }
  std::ifstream log_in(jsonl_path);
  if (!log_in) throw ConfigError("cannot open " + jsonl_path);
  return CallLog(read_jsonl(log_in), meta_from_json(meta_json));
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  std::size_t index;
  std::string reason;

  bool operator==(const Violation&) const = default;
};

// Empty iff the log satisfies every record- and log-level invariant.
inline std::vector<Violation> validate_log(const CallLog& log) {
  std::vector<Violation> out;
  const auto& rs = log.records();
  std::unordered_map<std::uint64_t, std::size_t> seen_seq;
  seen_seq.reserve(rs.size());
  const bool has_registry = !log.meta().touchpal_users.empty();

  // TouchPal-to-TouchPal legs keyed by (caller, callee, date) -> (#incoming - #outgoing)
  struct LegKey {
    PhoneId caller, callee;
    std::int64_t date;
    bool operator==(const LegKey&) const = default;
  };
  struct LegHash {
    std::size_t operator()(const LegKey& k) const noexcept {
      return static_cast<std::size_t>(k.caller.hash() * 31 + k.callee.hash() * 17 + static_cast<std::uint64_t>(k.date));
    }
  };
  std::unordered_map<LegKey, long, LegHash> legs;
  std::unordered_map<LegKey, std::size_t, LegHash> leg_index;

  for (std::size_t i = 0; i < rs.size(); ++i) {
    const auto& r = rs[i];
    if (auto [it, inserted] = seen_seq.emplace(r.seq, i); !inserted)
      out.push_back({i, "duplicate seq " + std::to_string(r.seq)});
    if (i > 0 && rs[i - 1].seq != r.seq && !(record_before(rs[i - 1], r) && rs[i - 1].seq < r.seq))
      out.push_back({i, "ordering: record is out of (call_date, seq) order"});
    if (r.call_duration < 0) out.push_back({i, "negative call_duration"});
    if (r.call_date < 0) out.push_back({i, "negative call_date"});
    if (r.user_id == r.other_phone) out.push_back({i, "user_id equals other_phone"});
    if (r.other_province.empty() || r.user_province.empty()) out.push_back({i, "empty province"});
    if (has_registry) {
      if (!log.is_touchpal(r.user_id)) out.push_back({i, "user_id is not a registered TouchPal user"});
      if (log.is_touchpal(r.other_phone)) {
        LegKey key{r.caller(), r.callee(), r.call_date};
        legs[key] += r.call_type == CallType::incoming ? 1 : -1;
        leg_index.emplace(key, i);
      }
    }
  }
  std::vector<std::size_t> unpaired;
  for (const auto& [key, balance] : legs)
    if (balance != 0) unpaired.push_back(leg_index.at(key));
  std::sort(unpaired.begin(), unpaired.end());
  for (auto i : unpaired) out.push_back({i, "unpaired TouchPal-to-TouchPal record"});
  std::stable_sort(out.begin(), out.end(), [](const Violation& a, const Violation& b) { return a.index < b.index; });
  return out;
}

// ---------------------------------------------------------------------------
// History lookups

// Records of `log` involving party `x` with seq < before, in log order.
inline std::vector<CallRecord> party_history_scan(const CallLog& log, const PhoneId& x, std::uint64_t before) {
  std::vector<CallRecord> out;
  for (const auto& r : log.records())
    if (r.seq < before && r.involves(x)) out.push_back(r);
  return out;
}

// Per-party record index over an immutable log. Lookups are O(log n + k).
class LogIndex {
public:
  explicit LogIndex(const CallLog& log) : log_(&log) {
    const auto& rs = log.records();
    for (std::uint32_t i = 0; i < rs.size(); ++i) {
      by_party_[rs[i].user_id].push_back(i);
      by_party_[rs[i].other_phone].push_back(i);
    }
  }

  // Indices (into the log) of records involving x with seq < before.
  std::vector<std::uint32_t> party_indices(const PhoneId& x, std::uint64_t before) const {
    auto it = by_party_.find(x);
    if (it == by_party_.end()) return {};
    const auto& idx = it->second;
    const auto& rs = log_->records();
    // seq increases along log order, so the qualifying records form a prefix
    auto end = std::partition_point(idx.begin(), idx.end(), [&](std::uint32_t i) { return rs[i].seq < before; });
    return {idx.begin(), end};
  }

  std::vector<CallRecord> party_history(const PhoneId& x, std::uint64_t before) const {
    std::vector<CallRecord> out;
    for (auto i : party_indices(x, before)) out.push_back((*log_)[i]);
    return out;
  }

  std::vector<CallRecord> pair_history(const PhoneId& a, const PhoneId& b, std::uint64_t before) const {
    std::vector<CallRecord> out;
    if (a == b) return out;
    auto ia = by_party_.find(a);
    auto ib = by_party_.find(b);
    if (ia == by_party_.end() || ib == by_party_.end()) return out;
    const PhoneId& scan = ia->second.size() <= ib->second.size() ? a : b;
    const PhoneId& other = scan == a ? b : a;
    for (auto i : party_indices(scan, before)) {
      const auto& r = (*log_)[i];
      if (r.counterpart_of(scan) == other) out.push_back(r);
    }
    return out;
  }

private:
  const CallLog* log_;
  std::unordered_map<PhoneId, std::vector<std::uint32_t>, PhoneIdHash> by_party_;
};

inline std::vector<CallRecord> party_history(const CallLog& log, const PhoneId& x, std::uint64_t before) {
  return LogIndex(log).party_history(x, before);
}

inline std::vector<CallRecord> pair_history(const CallLog& log, const PhoneId& a, const PhoneId& b,
                                            std::uint64_t before) {
  return LogIndex(log).pair_history(a, b, before);
}

}  // namespace malcall
