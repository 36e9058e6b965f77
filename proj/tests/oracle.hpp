#pragma once

// Rescan reference for the streaming feature engine. Every quantity is
// recomputed from the raw records preceding the query, with no state carried
// between queries.

#include <array>
#include <map>
#include <set>
#include <vector>

#include "malcall/call_log.hpp"
#include "malcall/features.hpp"

namespace oracle {

using malcall::CallLog;
using malcall::CallRecord;
using malcall::CallType;
using malcall::PhoneId;

struct Counts {
  double outs = 0, ins = 0, outdeg = 0, indeg = 0;
};

class Rescan {
public:
  explicit Rescan(const CallLog& log) : log_(log) {
    tp_.insert(log.meta().touchpal_users.begin(), log.meta().touchpal_users.end());
    const auto& rs = log.records();
    for (std::size_t i = 0; i < rs.size(); ++i) {
      if (mirror(rs[i])) continue;
      const auto& r = rs[i];
      const PhoneId caller = r.call_type == CallType::incoming ? r.other_phone : r.user_id;
      const PhoneId callee = r.call_type == CallType::incoming ? r.user_id : r.other_phone;
      involving_[caller].push_back(i);
      involving_[callee].push_back(i);
    }
  }

  bool mirror(const CallRecord& r) const { return r.call_type == CallType::outgoing && tp_.contains(r.other_phone); }

  bool qualifies(const CallRecord& r) const { return r.call_type == CallType::incoming && !tp_.contains(r.other_phone); }

  Counts counts(const PhoneId& p, std::size_t before) const {
    Counts c;
    std::set<PhoneId> out_to, in_from;
    for (auto i : list(p)) {
      if (i >= before) break;
      const auto& r = log_[i];
      if (caller_of(r) == p) {
        c.outs += 1;
        out_to.insert(callee_of(r));
      }
      if (callee_of(r) == p) {
        c.ins += 1;
        in_from.insert(caller_of(r));
      }
    }
    c.outdeg = static_cast<double>(out_to.size());
    c.indeg = static_cast<double>(in_from.size());
    return c;
  }

  double pair_calls(const PhoneId& a, const PhoneId& b, std::size_t before) const {
    double n = 0;
    for (auto i : list(a)) {
      if (i >= before) break;
      const auto& r = log_[i];
      if ((caller_of(r) == a && callee_of(r) == b) || (caller_of(r) == b && callee_of(r) == a)) n += 1;
    }
    return n;
  }

  bool redial(std::size_t k) const {
    const auto& r = log_[k];
    const PhoneId caller = caller_of(r);
    std::size_t last = SIZE_MAX;
    for (auto i : list(caller)) {
      if (i >= k) break;
      last = i;
    }
    if (last == SIZE_MAX) return false;
    const auto& q = log_[last];
    const PhoneId other = caller_of(q) == caller ? callee_of(q) : caller_of(q);
    return other == callee_of(r);
  }

  // The 16 per-record quantities averaged by the historic block, minus the gap.
  std::array<double, 15> record_row(std::size_t k, std::int64_t tz) const {
    const auto& r = log_[k];
    const auto a = counts(caller_of(r), k), b = counts(callee_of(r), k);
    return {r.call_contact ? 1.0 : 0.0,
            r.call_type == CallType::outgoing ? 1.0 : 0.0,
            static_cast<double>(r.call_duration),
            static_cast<double>(weekday(r.call_date, tz)),
            static_cast<double>(hour(r.call_date, tz)),
            r.other_province == r.user_province ? 1.0 : 0.0,
            a.outs, a.ins, a.outdeg, a.indeg, b.outs, b.ins, b.outdeg, b.indeg,
            redial(k) ? 1.0 : 0.0};
  }

  // Features of qualifying record i, returned as 29 values plus history_len.
  std::array<double, 30> features(std::size_t i, std::size_t history_cap = 100, std::int64_t tz = 0) const {
    const auto& r = log_[i];
    std::array<double, 30> f{};
    const auto a = counts(caller_of(r), i), b = counts(callee_of(r), i);
    const double cur[] = {r.call_contact ? 1.0 : 0.0,
                          static_cast<double>(weekday(r.call_date, tz)),
                          static_cast<double>(hour(r.call_date, tz)),
                          r.other_province == r.user_province ? 1.0 : 0.0,
                          a.outs, a.ins, a.outdeg, a.indeg, b.outs, b.ins, b.outdeg, b.indeg,
                          pair_calls(caller_of(r), callee_of(r), i) + 1};
    for (int k = 0; k < 13; ++k) f[k] = cur[k];

    // The caller's previous records: every non-mirror record whose other party is the caller.
    std::vector<std::size_t> hist;
    for (std::size_t k = 0; k < i; ++k)
      if (!mirror(log_[k]) && log_[k].other_phone == r.other_phone) hist.push_back(k);
    if (hist.size() > history_cap) hist.erase(hist.begin(), hist.end() - static_cast<std::ptrdiff_t>(history_cap));
    f[29] = static_cast<double>(hist.size());
    if (hist.empty()) return f;
    std::array<double, 16> sum{};
    for (std::size_t h = 0; h < hist.size(); ++h) {
      const auto row = record_row(hist[h], tz);
      for (int k = 0; k < 15; ++k) sum[k] += row[k];
      const auto next = h + 1 < hist.size() ? log_[hist[h + 1]].call_date : r.call_date;
      sum[15] += static_cast<double>(next - log_[hist[h]].call_date);
    }
    for (int k = 0; k < 16; ++k) f[13 + k] = sum[k] / static_cast<double>(hist.size());
    return f;
  }

private:
  static PhoneId caller_of(const CallRecord& r) { return r.call_type == CallType::incoming ? r.other_phone : r.user_id; }
  static PhoneId callee_of(const CallRecord& r) { return r.call_type == CallType::incoming ? r.user_id : r.other_phone; }

  // 1970-01-01 was a Thursday; Monday = 0.
  static int weekday(std::int64_t t, std::int64_t tz) {
    std::int64_t d = (t + tz) / 86400;
    if ((t + tz) % 86400 < 0) --d;
    return static_cast<int>(((d + 3) % 7 + 7) % 7);
  }
  static int hour(std::int64_t t, std::int64_t tz) {
    std::int64_t s = (t + tz) % 86400;
    if (s < 0) s += 86400;
    return static_cast<int>(s / 3600);
  }

  const std::vector<std::size_t>& list(const PhoneId& p) const {
    static const std::vector<std::size_t> none;
    auto it = involving_.find(p);
    return it == involving_.end() ? none : it->second;
  }

  const CallLog& log_;
  std::set<PhoneId> tp_;
  std::map<PhoneId, std::vector<std::size_t>> involving_;
};

}  // namespace oracle
