#pragma once

// Reputation blacklist: a number is blocked once its malicious-label count
// reaches its threshold M.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "malcall/call_log.hpp"
#include "malcall/error.hpp"

namespace malcall {

class BlacklistState {
public:
  explicit BlacklistState(std::size_t default_threshold = 30) : default_threshold_(default_threshold) {
    if (default_threshold == 0) throw ContractError("blacklist threshold must be >= 1");
  }

  // Counts keep accruing after a number is blocked.
  void process_label(const PhoneId& phone, CallTag tag) {
    if (is_malicious(tag)) ++counts_[phone];
  }

  void set_threshold(const PhoneId& phone, std::size_t m) {
    if (m == 0) throw ContractError("blacklist threshold must be >= 1");
    thresholds_[phone] = m;
  }

  std::size_t threshold(const PhoneId& phone) const {
    auto it = thresholds_.find(phone);
    return it == thresholds_.end() ? default_threshold_ : it->second;
  }

  std::size_t count(const PhoneId& phone) const {
    auto it = counts_.find(phone);
    return it == counts_.end() ? 0 : it->second;
  }

  bool blocked(const PhoneId& phone) const { return count(phone) >= threshold(phone); }

  std::size_t default_threshold() const noexcept { return default_threshold_; }

  // {"<hex>": {"count": n, "threshold": m, "blocked": b}, ...} over every
  // number with a label or an override.
  nlohmann::json snapshot() const {
    std::map<PhoneId, int> keys;
    for (const auto& [p, c] : counts_) keys[p] = 0;
    for (const auto& [p, m] : thresholds_) keys[p] = 0;
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [p, unused] : keys)
      j[p.hex()] = {{"count", count(p)}, {"threshold", threshold(p)}, {"blocked", blocked(p)}};
    return j;
  }

private:
  std::size_t default_threshold_;
  std::map<PhoneId, std::size_t> counts_;
  std::map<PhoneId, std::size_t> thresholds_;
};

// Under full labeling the first M calls of a malicious number pass and call
// M+1 is the first one blocked.
template <class Records>
int baseline_fp(const Records& records, int M) {
  if (std::size(records) == 0) throw ContractError("baseline_fp: empty record list");
  if (M < 1) throw ContractError("baseline_fp: M must be >= 1");
  return M + 1;
}

// Replays the tags carried by `phone`'s calls (incoming records whose caller is
// `phone`, in log order) against threshold M. Returns the 1-based index of the
// first call that arrives while the number is already blocked, or
// calls + 1 when it never gets blocked in time. Not capped at M+1.
inline std::size_t replay_first_blocked(const CallLog& log, const PhoneId& phone, std::size_t M) {
  BlacklistState state(M);
  std::size_t calls = 0;
  for (const auto& r : log.records()) {
    if (r.call_type != CallType::incoming || r.other_phone != phone) continue;
    ++calls;
    if (state.blocked(phone)) return calls;
    state.process_label(phone, r.call_tag);
  }
  return calls + 1;
}

// Mean of replay_first_blocked over `numbers`, in one pass over the log.
inline double baseline_afp_replay(const CallLog& log, std::span<const PhoneId> numbers, std::size_t M) {
  if (numbers.empty()) throw ContractError("baseline_afp_replay: no numbers");
  BlacklistState state(M);
  std::map<PhoneId, std::size_t> calls, first;
  for (const auto& p : numbers) calls[p] = 0;
  for (const auto& r : log.records()) {
    if (r.call_type != CallType::incoming) continue;
    auto it = calls.find(r.other_phone);
    if (it == calls.end() || first.contains(r.other_phone)) continue;
    ++it->second;
    if (state.blocked(r.other_phone)) first[r.other_phone] = it->second;
    else state.process_label(r.other_phone, r.call_tag);
  }
  double s = 0.0;
  for (const auto& p : numbers) {
    auto f = first.find(p);
    s += static_cast<double>(f != first.end() ? f->second : calls[p] + 1);
  }
  return s / static_cast<double>(numbers.size());
}

}  // namespace malcall
