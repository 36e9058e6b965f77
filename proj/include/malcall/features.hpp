#pragma once

// Streaming feature extraction.
//
// Every non-mirror record updates per-number call counters. When an incoming
// call from a non-TouchPal number reaches a TouchPal user we compute the
// current block (contact, weekday, hour, same province, both parties'
// counters "before the record", pair call index n_call) and the historic
// block (the mean of the per-record vectors of the caller's previous records).

#include <algorithm>
#include <array>
#include <bitset>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "malcall/call_log.hpp"
#include "malcall/error.hpp"
#include "malcall/rng.hpp"

namespace malcall {

// ---------------------------------------------------------------------------
// Feature roster

enum class Feature : std::uint8_t {
  is_in_contact,
  weekday,
  hour,
  same_location,
  caller_outs,
  caller_ins,
  caller_outdegree,
  caller_indegree,
  callee_outs,
  callee_ins,
  callee_outdegree,
  callee_indegree,
  n_call,
  hist_is_in_contact,
  hist_call_type,
  hist_duration,
  hist_weekday,
  hist_hour,
  hist_same_location,
  hist_caller_outs,
  hist_caller_ins,
  hist_caller_outdegree,
  hist_caller_indegree,
  hist_callee_outs,
  hist_callee_ins,
  hist_callee_outdegree,
  hist_callee_indegree,
  hist_is_redial,
  hist_gap_to_next,
};

inline constexpr std::size_t kNumFeatures = 29;
inline constexpr std::size_t kNumCurrent = 13;
// Index of the auxiliary history-length column in schemas (not one of the 29).
inline constexpr int kHistoryLenFeature = 29;

inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "is_in_contact",         "weekday",
    "hour",                  "same_location",
    "caller_outs",           "caller_ins",
    "caller_outdegree",      "caller_indegree",
    "callee_outs",           "callee_ins",
    "callee_outdegree",      "callee_indegree",
    "n_call",                "hist_is_in_contact",
    "hist_call_type",        "hist_duration",
    "hist_weekday",          "hist_hour",
    "hist_same_location",    "hist_caller_outs",
    "hist_caller_ins",       "hist_caller_outdegree",
    "hist_caller_indegree",  "hist_callee_outs",
    "hist_callee_ins",       "hist_callee_outdegree",
    "hist_callee_indegree",  "hist_is_redial",
    "hist_gap_to_next",
};

constexpr std::size_t index_of(Feature f) noexcept { return static_cast<std::size_t>(f); }
inline std::string_view feature_name(Feature f) { return kFeatureNames[index_of(f)]; }

inline std::optional<Feature> feature_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumFeatures; ++i)
    if (kFeatureNames[i] == name) return static_cast<Feature>(i);
  return std::nullopt;
}

constexpr bool is_historic(Feature f) noexcept { return index_of(f) >= kNumCurrent; }

// Computed from more than one record: the eight counters, n_call, is_redial, gap_to_next.
constexpr bool is_crossref(Feature f) noexcept {
  const auto i = index_of(f);
  return (i >= index_of(Feature::caller_outs) && i <= index_of(Feature::n_call)) ||
         i >= index_of(Feature::hist_caller_outs);
}

// ---------------------------------------------------------------------------
// Counters

struct Counters {
  std::uint32_t outs = 0;
  std::uint32_t ins = 0;
  std::uint32_t outdegree = 0;
  std::uint32_t indegree = 0;

  bool operator==(const Counters&) const = default;
};

// Incremental per-number call counters with "before the record" semantics:
// query first, then apply the record.
class CounterState {
public:
  void update(const CallRecord& r) {
    if (has_last_ && !record_before(last_, r))
      throw OrderingError("record seq " + std::to_string(r.seq) + " does not follow seq " +
                          std::to_string(last_.seq) + " in (call_date, seq) order");
    last_ = r;
    has_last_ = true;

    const std::uint32_t caller = intern(r.caller());
    const std::uint32_t callee = intern(r.callee());
    auto& a = entries_[caller];
    auto& b = entries_[callee];
    a.counters.outs += 1;
    b.counters.ins += 1;
    if (directed_.insert(directed_key(caller, callee)).second) {
      a.counters.outdegree += 1;
      b.counters.indegree += 1;
    }
    pairs_[pair_key(caller, callee)] += 1;
    a.last_counterpart = static_cast<std::int64_t>(callee);
    b.last_counterpart = static_cast<std::int64_t>(caller);
    a.last_seq = r.seq;
    b.last_seq = r.seq;
  }

  Counters snapshot(const PhoneId& p) const {
    auto it = index_.find(p);
    return it == index_.end() ? Counters{} : entries_[it->second].counters;
  }

  std::uint32_t pair_count(const PhoneId& a, const PhoneId& b) const {
    auto ia = index_.find(a);
    auto ib = index_.find(b);
    if (ia == index_.end() || ib == index_.end()) return 0;
    auto it = pairs_.find(pair_key(ia->second, ib->second));
    return it == pairs_.end() ? 0 : it->second;
  }

  // Counterpart of p's most recent call in either direction.
  std::optional<PhoneId> last_counterpart(const PhoneId& p) const {
    auto it = index_.find(p);
    if (it == index_.end() || entries_[it->second].last_counterpart < 0) return std::nullopt;
    return ids_[static_cast<std::size_t>(entries_[it->second].last_counterpart)];
  }

  std::size_t numbers() const noexcept { return entries_.size(); }

private:
  struct Entry {
    Counters counters;
    std::int64_t last_counterpart = -1;
    std::uint64_t last_seq = 0;
  };

  static std::uint64_t directed_key(std::uint32_t from, std::uint32_t to) noexcept {
    return (static_cast<std::uint64_t>(from) << 32) | to;
  }
  static std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) noexcept {
    return a < b ? directed_key(a, b) : directed_key(b, a);
  }

  std::uint32_t intern(const PhoneId& p) {
    auto [it, inserted] = index_.try_emplace(p, static_cast<std::uint32_t>(entries_.size()));
    if (inserted) {
      entries_.emplace_back();
      ids_.push_back(p);
    }
    return it->second;
  }

  std::unordered_map<PhoneId, std::uint32_t, PhoneIdHash> index_;
  std::vector<Entry> entries_;
  std::vector<PhoneId> ids_;
  std::unordered_set<std::uint64_t> directed_;
  std::unordered_map<std::uint64_t, std::uint32_t> pairs_;
  CallRecord last_;
  bool has_last_ = false;
};

// ---------------------------------------------------------------------------
// Per-record vectors and raw features

struct FeatureOptions {
  std::size_t history_cap = 100;
  std::int64_t tz_offset = 0;
};

// Everything about one past record that is fixed once the record is seen.
struct RecordSnapshot {
  std::int64_t call_date = 0;
  std::int64_t duration = 0;
  std::uint8_t weekday = 0;
  std::uint8_t hour = 0;
  bool in_contact = false;
  bool outgoing = false;
  bool same_location = false;
  bool is_redial = false;
  Counters caller;
  Counters callee;
};

struct RawFeatures {
  std::array<double, kNumFeatures> values{};
  double history_len = 0.0;

  double& operator[](Feature f) { return values[index_of(f)]; }
  double operator[](Feature f) const { return values[index_of(f)]; }

  bool operator==(const RawFeatures&) const = default;
};

// Snapshot of `r` against a state that holds exactly the records before it.
inline RecordSnapshot snapshot_record(const CallRecord& r, const CounterState& state, std::int64_t tz_offset) {
  RecordSnapshot s;
  s.call_date = r.call_date;
  s.duration = r.call_duration;
  s.weekday = static_cast<std::uint8_t>(weekday_of(r.call_date, tz_offset));
  s.hour = static_cast<std::uint8_t>(hour_of(r.call_date, tz_offset));
  s.in_contact = r.call_contact;
  s.outgoing = r.call_type == CallType::outgoing;
  s.same_location = r.other_province == r.user_province;
  s.caller = state.snapshot(r.caller());
  s.callee = state.snapshot(r.callee());
  const auto last = state.last_counterpart(r.caller());
  s.is_redial = last && *last == r.callee();
  return s;
}

// Combines the current record's block with the mean of the history vectors.
// `history` is in time order; its last element is followed by the current call.
inline RawFeatures assemble_features(const RecordSnapshot& current, std::uint32_t n_call,
                                     std::span<const RecordSnapshot> history) {
  RawFeatures f;
  f[Feature::is_in_contact] = current.in_contact ? 1.0 : 0.0;
  f[Feature::weekday] = current.weekday;
  f[Feature::hour] = current.hour;
  f[Feature::same_location] = current.same_location ? 1.0 : 0.0;
  f[Feature::caller_outs] = current.caller.outs;
  f[Feature::caller_ins] = current.caller.ins;
  f[Feature::caller_outdegree] = current.caller.outdegree;
  f[Feature::caller_indegree] = current.caller.indegree;
  f[Feature::callee_outs] = current.callee.outs;
  f[Feature::callee_ins] = current.callee.ins;
  f[Feature::callee_outdegree] = current.callee.outdegree;
  f[Feature::callee_indegree] = current.callee.indegree;
  f[Feature::n_call] = n_call;

  f.history_len = static_cast<double>(history.size());
  if (history.empty()) return f;

  std::array<double, kNumFeatures - kNumCurrent> sum{};
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& h = history[i];
    const std::int64_t next_date = i + 1 < history.size() ? history[i + 1].call_date : current.call_date;
    const double row[] = {h.in_contact ? 1.0 : 0.0,
                          h.outgoing ? 1.0 : 0.0,
                          static_cast<double>(h.duration),
                          static_cast<double>(h.weekday),
                          static_cast<double>(h.hour),
                          h.same_location ? 1.0 : 0.0,
                          static_cast<double>(h.caller.outs),
                          static_cast<double>(h.caller.ins),
                          static_cast<double>(h.caller.outdegree),
                          static_cast<double>(h.caller.indegree),
                          static_cast<double>(h.callee.outs),
                          static_cast<double>(h.callee.ins),
                          static_cast<double>(h.callee.outdegree),
                          static_cast<double>(h.callee.indegree),
                          h.is_redial ? 1.0 : 0.0,
                          static_cast<double>(next_date - h.call_date)};
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += row[k];
  }
  const double n = static_cast<double>(history.size());
  for (std::size_t k = 0; k < sum.size(); ++k) f.values[kNumCurrent + k] = sum[k] / n;
  return f;
}

// Validates the prediction-instance contract and assembles the features.
// `state` and `history` must hold exactly the records preceding `r`.
inline RawFeatures extract_example(const CallLog& log, const CounterState& state, const CallRecord& r,
                                   std::span<const RecordSnapshot> history, const FeatureOptions& opt = {}) {
  if (r.call_type != CallType::incoming)
    throw ContractError("extract_example: record seq " + std::to_string(r.seq) + " is not an incoming call");
  if (log.is_touchpal(r.other_phone))
    throw ContractError("extract_example: caller of record seq " + std::to_string(r.seq) + " is a TouchPal user");
  const auto current = snapshot_record(r, state, opt.tz_offset);
  const std::uint32_t n_call = state.pair_count(r.caller(), r.callee()) + 1;
  if (history.size() > opt.history_cap) history = history.subspan(history.size() - opt.history_cap);
  return assemble_features(current, n_call, history);
}

// Streams a log record by record. Call extract() for a record before observe().
class FeatureEngine {
public:
  explicit FeatureEngine(const CallLog& log, FeatureOptions opt = {}) : log_(&log), opt_(opt) {}

  bool qualifies(const CallRecord& r) const {
    return r.call_type == CallType::incoming && !log_->is_touchpal(r.other_phone);
  }

  RawFeatures extract(const CallRecord& r) const {
    static const std::deque<RecordSnapshot> empty;
    auto it = history_.find(r.other_phone);
    const auto& h = it == history_.end() ? empty : it->second;
    scratch_.assign(h.begin(), h.end());
    return extract_example(*log_, state_, r, scratch_, opt_);
  }

  void observe(const CallRecord& r) {
    if (log_->is_mirror(r)) return;
    const auto snap = snapshot_record(r, state_, opt_.tz_offset);
    state_.update(r);
    if (!log_->is_touchpal(r.other_phone)) {
      auto& h = history_[r.other_phone];
      h.push_back(snap);
      if (h.size() > opt_.history_cap) h.pop_front();
    }
  }

  const CounterState& state() const noexcept { return state_; }
  const FeatureOptions& options() const noexcept { return opt_; }

private:
  const CallLog* log_;
  FeatureOptions opt_;
  CounterState state_;
  std::unordered_map<PhoneId, std::deque<RecordSnapshot>, PhoneIdHash> history_;
  mutable std::vector<RecordSnapshot> scratch_;
};

// One prediction instance: a qualifying incoming record and its features.
struct Example {
  std::size_t record_index = 0;
  PhoneId caller;
  Province caller_province;
  std::int64_t call_date = 0;
  bool malicious = false;
  RawFeatures raw;
};

using LabelTable = std::map<PhoneId, bool>;

// All qualifying examples of a log, in log order.
inline std::vector<Example> extract_all(const CallLog& log, const LabelTable& labels, FeatureOptions opt = {}) {
  FeatureEngine engine(log, opt);
  std::vector<Example> out;
  const auto& rs = log.records();
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const auto& r = rs[i];
    if (engine.qualifies(r)) {
      Example e;
      e.record_index = i;
      e.caller = r.other_phone;
      e.caller_province = r.other_province;
      e.call_date = r.call_date;
      auto it = labels.find(r.other_phone);
      e.malicious = it != labels.end() && it->second;
      e.raw = engine.extract(r);
      out.push_back(e);
    }
    engine.observe(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Selectors and encoding

class FeatureSelector {
public:
  enum class Kind { all, no_historic, no_crossref, basic, top10, custom };
  using Mask = std::bitset<kNumFeatures>;

  static FeatureSelector all() { return {Kind::all, Mask{}.set()}; }
  static FeatureSelector no_historic() {
    Mask m;
    for (std::size_t i = 0; i < kNumCurrent; ++i) m.set(i);
    return {Kind::no_historic, m};
  }
  static FeatureSelector no_crossref() {
    Mask m;
    for (std::size_t i = 0; i < kNumFeatures; ++i)
      if (!is_crossref(static_cast<Feature>(i))) m.set(i);
    return {Kind::no_crossref, m};
  }
  static FeatureSelector basic() { return {Kind::basic, no_historic().mask_ & no_crossref().mask_}; }
  static FeatureSelector top10(std::span<const Feature> features) {
    Mask m;
    for (auto f : features) m.set(index_of(f));
    if (m.count() != 10) throw ContractError("top10 selector needs exactly 10 distinct features");
    return {Kind::top10, m};
  }
  static FeatureSelector custom(Mask m) { return {Kind::custom, m}; }

  // "all", "no_historic", "no_crossref", "basic", "top10:f1,f2,...", "custom:f1,f2,..."
  static FeatureSelector parse(std::string_view s) {
    if (s == "all") return all();
    if (s == "no_historic") return no_historic();
    if (s == "no_crossref") return no_crossref();
    if (s == "basic") return basic();
    const auto colon = s.find(':');
    if (colon != std::string_view::npos) {
      const auto head = s.substr(0, colon);
      std::vector<Feature> fs;
      std::string_view rest = s.substr(colon + 1);
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        const auto name = rest.substr(0, comma);
        auto f = feature_from_name(name);
        if (!f) throw ConfigError("unknown feature '" + std::string(name) + "'");
        fs.push_back(*f);
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      }
      if (head == "top10") return top10(fs);
      if (head == "custom") {
        Mask m;
        for (auto f : fs) m.set(index_of(f));
        return custom(m);
      }
    }
    throw ConfigError("unknown feature selector '" + std::string(s) + "'");
  }

  Kind kind() const noexcept { return kind_; }
  const Mask& mask() const noexcept { return mask_; }
  bool contains(Feature f) const { return mask_.test(index_of(f)); }
  std::size_t feature_count() const { return mask_.count(); }
  bool has_historic() const {
    for (std::size_t i = kNumCurrent; i < kNumFeatures; ++i)
      if (mask_.test(i)) return true;
    return false;
  }

  std::string name() const {
    switch (kind_) {
      case Kind::all: return "all";
      case Kind::no_historic: return "no_historic";
      case Kind::no_crossref: return "no_crossref";
      case Kind::basic: return "basic";
      case Kind::top10:
      case Kind::custom: {
        std::string s = kind_ == Kind::top10 ? "top10:" : "custom:";
        bool first = true;
        for (std::size_t i = 0; i < kNumFeatures; ++i)
          if (mask_.test(i)) {
            if (!first) s += ',';
            s += kFeatureNames[i];
            first = false;
          }
        return s;
      }
    }
    return "all";
  }

private:
  FeatureSelector(Kind k, Mask m) : kind_(k), mask_(m) {}
  Kind kind_;
  Mask mask_;
};

enum class Encoding : std::uint8_t { binary, one_hot, log1p };

inline std::string_view to_string(Encoding e) {
  switch (e) {
    case Encoding::binary: return "binary";
    case Encoding::one_hot: return "one_hot";
    case Encoding::log1p: return "log1p";
  }
  return "log1p";
}

struct SchemaEntry {
  int feature;  // Feature index, or kHistoryLenFeature
  std::string name;
  Encoding encoding;
  std::size_t width;
  std::size_t offset;
};

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Schema {
public:
  explicit Schema(const FeatureSelector& sel) : selector_name_(sel.name()) {
    std::size_t off = 0;
    auto add = [&](int feature, std::string name, Encoding enc, std::size_t width) {
      entries_.push_back({feature, std::move(name), enc, width, off});
      for (std::size_t k = 0; k < width; ++k) column_feature_.push_back(feature);
      off += width;
    };
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      if (!sel.mask().test(i)) continue;
      const auto f = static_cast<Feature>(i);
      const std::string name(kFeatureNames[i]);
      if (f == Feature::weekday) add(static_cast<int>(i), name, Encoding::one_hot, 7);
      else if (f == Feature::hour) add(static_cast<int>(i), name, Encoding::one_hot, 24);
      else if (f == Feature::is_in_contact || f == Feature::same_location)
        add(static_cast<int>(i), name, Encoding::binary, 1);
      else add(static_cast<int>(i), name, Encoding::log1p, 1);
    }
    if (sel.has_historic()) add(kHistoryLenFeature, "history_len", Encoding::log1p, 1);
    width_ = off;
    std::string text;
    for (const auto& e : entries_)
      text += e.name + ":" + std::string(to_string(e.encoding)) + ":" + std::to_string(e.width) + ";";
    fingerprint_ = fnv1a(text);
  }

  const std::vector<SchemaEntry>& entries() const noexcept { return entries_; }
  std::size_t width() const noexcept { return width_; }
  std::uint64_t fingerprint() const noexcept { return fingerprint_; }
  const std::string& selector_name() const noexcept { return selector_name_; }
  int column_feature(std::size_t col) const { return column_feature_.at(col); }

  std::string column_name(std::size_t col) const {
    for (const auto& e : entries_)
      if (col >= e.offset && col < e.offset + e.width)
        return e.width == 1 ? e.name : e.name + "=" + std::to_string(col - e.offset);
    return "col" + std::to_string(col);
  }

private:
  std::string selector_name_;
  std::vector<SchemaEntry> entries_;
  std::vector<int> column_feature_;
  std::size_t width_ = 0;
  std::uint64_t fingerprint_ = 0;
};

inline std::string feature_label(int feature) {
  return feature == kHistoryLenFeature ? std::string("history_len")
                                       : std::string(kFeatureNames[static_cast<std::size_t>(feature)]);
}

inline void encode_into(const RawFeatures& raw, const Schema& schema, std::span<double> out) {
  for (const auto& e : schema.entries()) {
    const double v = e.feature == kHistoryLenFeature ? raw.history_len : raw.values[static_cast<std::size_t>(e.feature)];
    switch (e.encoding) {
      case Encoding::binary: out[e.offset] = v != 0.0 ? 1.0 : 0.0; break;
      case Encoding::one_hot: {
        for (std::size_t k = 0; k < e.width; ++k) out[e.offset + k] = 0.0;
        const auto idx = std::clamp<long>(std::lround(v), 0, static_cast<long>(e.width) - 1);
        out[e.offset + static_cast<std::size_t>(idx)] = 1.0;
        break;
      }
      case Encoding::log1p: out[e.offset] = std::log1p(v); break;
    }
  }
}

struct EncodedVector {
  std::vector<double> values;
  std::shared_ptr<const Schema> schema;
};

inline EncodedVector encode(const RawFeatures& raw, std::shared_ptr<const Schema> schema) {
  EncodedVector v{std::vector<double>(schema->width()), std::move(schema)};
  encode_into(raw, *v.schema, v.values);
  return v;
}

inline EncodedVector encode(const RawFeatures& raw, const FeatureSelector& selector) {
  return encode(raw, std::make_shared<const Schema>(selector));
}

// Recovers the retained raw fields; unretained fields are left at zero.
inline RawFeatures decode(std::span<const double> values, const Schema& schema) {
  RawFeatures raw;
  for (const auto& e : schema.entries()) {
    double v = 0.0;
    switch (e.encoding) {
      case Encoding::binary: v = values[e.offset]; break;
      case Encoding::one_hot:
        for (std::size_t k = 0; k < e.width; ++k)
          if (values[e.offset + k] == 1.0) v = static_cast<double>(k);
        break;
      case Encoding::log1p: v = std::expm1(values[e.offset]); break;
    }
    if (e.feature == kHistoryLenFeature) raw.history_len = v;
    else raw.values[static_cast<std::size_t>(e.feature)] = v;
  }
  return raw;
}

}  // namespace malcall
