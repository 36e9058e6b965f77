#pragma once

// Deterministic synthetic call-log generator.
//
// Populations: TouchPal users (the logging side), benign non-TouchPal
// numbers (private "regular" callers plus two high-volume minorities:
// "business" callers that keep ringing the same customers and "service"
// lines that reach many people with long calls) and malicious numbers. Per-class temporal profiles,
// heavy-tailed call budgets, counterpart pools and redial affinity make the
// cross-referencing and historic features informative. TouchPal-to-TouchPal
// traffic is sized so the malicious record fraction hits the configured
// target.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "malcall/call_log.hpp"
#include "malcall/error.hpp"
#include "malcall/rng.hpp"

namespace malcall {

enum class ActorClass : std::uint8_t { benign, malicious, touchpal };

struct TemporalProfile {
  std::array<double, 24> hour_weights{};
  double weekday_multiplier = 1.0;
  double weekend_multiplier = 1.0;
};

// Discrete bounded power law: budget = floor(min(cap, min_budget * U^(-1/exponent))).
struct DegreeProfile {
  double min_budget = 1.0;
  double tail_exponent = 1.6;
  int cap = 400;
  double pool_exponent = 0.5;  // counterpart pool = max(1, round(budget^pool_exponent))
};

struct SpanProfile {
  double full_span_prob = 0.2;   // active for the whole window
  double short_span_prob = 0.4;  // active for 1-3 days
};

struct CallerProfile {
  TemporalProfile temporal;
  DegreeProfile degree;
  SpanProfile span;
  double repeat_affinity = 0.5;   // P(call repeats the immediately preceding counterpart)
  double contact_rate = 0.5;
  double duration_median = 60.0;
  double duration_sigma = 1.0;
  double inbound_fraction = 0.5;  // share of this number's calls it places itself
  double same_province_pool = 0.8;
};

struct ProvinceWeight {
  std::string code;
  double weight = 1.0;
};

struct GeneratorConfig {
  std::uint64_t seed = 0;
  int days = 30;
  std::int64_t start_time = 1475280000;  // 2016-10-01 00:00:00 UTC
  std::int64_t tz_offset = 0;
  std::vector<ProvinceWeight> provinces;

  int n_touchpal_users = 4000;
  int n_benign_others = 20000;
  int n_malicious = 100;

  double malicious_calls_per_number_mean = 91.0;
  double malicious_record_fraction_target = 0.008;
  double contact_rate_malicious = 0.1356;
  double callback_prob_malicious = 0.03;
  double tag_drop_prob = 0.0;

  double business_fraction = 0.05;
  double service_fraction = 0.03;
  double business_tag_prob = 0.1;
  int max_duration = 3600;

  // Used only when the malicious fraction cannot calibrate the filler volume.
  double touchpal_calls_per_user_day = 1.0;
  int touchpal_friends_min = 3;
  int touchpal_friends_max = 15;

  CallerProfile benign;
  CallerProfile business;
  CallerProfile service;
  CallerProfile malicious;
  CallerProfile touchpal;

  GeneratorConfig();
};

inline GeneratorConfig::GeneratorConfig() {
  provinces = {{"BJ", 3.0}, {"GD", 2.5}, {"SH", 2.0}, {"SC", 1.5},
               {"ZJ", 1.5}, {"JL", 0.6}, {"GZ", 0.5}, {"AH", 0.4}};

  const std::array<double, 24> benign_hours = {0.5, 0.3, 0.2, 0.2, 0.2, 0.4, 1.0, 2.0, 4.0, 5.0, 5.5, 5.5,
                                               5.0, 5.0, 5.0, 5.0, 5.0, 5.5, 6.0, 6.5, 6.0, 4.5, 3.0, 1.5};
  const std::array<double, 24> work_hours = {0.1, 0.05, 0.05, 0.05, 0.05, 0.1, 0.3, 1.0, 4.0,  9.0, 10.0, 10.0,
                                             5.0, 9.0,  10.0, 10.0, 9.0,  6.0, 2.0, 1.0, 0.6, 0.4, 0.2,  0.1};

  benign.temporal = {benign_hours, 1.0, 0.9};
  benign.degree = {1.0, 1.6, 400, 0.5};
  benign.span = {0.2, 0.45};
  benign.repeat_affinity = 0.6;
  benign.contact_rate = 0.75;
  benign.duration_median = 75.0;
  benign.duration_sigma = 1.0;
  benign.inbound_fraction = 0.5;

  business.temporal = {work_hours, 1.0, 0.5};
  business.degree = {15.0, 1.5, 800, 0.4};
  business.span = {0.5, 0.1};
  business.repeat_affinity = 0.6;
  business.contact_rate = 0.15;
  business.duration_median = 25.0;
  business.duration_sigma = 0.9;
  business.inbound_fraction = 0.97;
  business.same_province_pool = 0.2;

  service.temporal = {work_hours, 1.0, 0.4};
  service.degree = {20.0, 1.5, 1000, 1.0};
  service.span = {0.5, 0.1};
  service.repeat_affinity = 0.02;
  service.contact_rate = 0.15;
  service.duration_median = 240.0;
  service.duration_sigma = 0.7;
  service.inbound_fraction = 1.0;
  service.same_province_pool = 0.2;

  malicious.temporal = {work_hours, 1.0, 0.3};
  malicious.degree = {45.0, 2.0, 1500, 1.0};
  malicious.span = {0.5, 0.25};
  malicious.repeat_affinity = 0.03;
  malicious.contact_rate = contact_rate_malicious;
  malicious.duration_median = 20.0;
  malicious.duration_sigma = 0.9;
  malicious.inbound_fraction = 1.0;
  malicious.same_province_pool = 0.2;

  touchpal.temporal = {benign_hours, 1.0, 1.0};
  touchpal.degree = {1.0, 1.6, 400, 0.5};
  touchpal.span = {1.0, 0.0};
  touchpal.repeat_affinity = 0.3;
  touchpal.contact_rate = 0.9;
  touchpal.duration_median = 90.0;
  touchpal.duration_sigma = 1.0;
}

struct ActorProfile {
  PhoneId id;
  ActorClass cls = ActorClass::benign;
  bool business = false;
  bool service = false;
  Province province;
  int budget = 0;
  int pool_size = 0;
  int first_day = 0;
  int last_day = 0;  // inclusive
  CallTag tag = CallTag::none;
};

struct GeneratedLog {
  CallLog log;
  std::map<PhoneId, bool> labels;  // non-TouchPal number -> is_malicious
  std::vector<ActorProfile> actors;
};

// ---------------------------------------------------------------------------
// Sampling primitives

struct DegreeDraw {
  int budget = 1;
  int pool = 1;
};

inline DegreeDraw sample_degree_profile(const DegreeProfile& p, Rng& rng) {
  const double u = rng.uniform_open_low();
  const double x = p.min_budget * std::pow(u, -1.0 / p.tail_exponent);
  const double capped = std::min(static_cast<double>(p.cap), x);
  DegreeDraw d;
  d.budget = std::max(1, static_cast<int>(std::floor(capped)));
  d.pool = std::max(1, static_cast<int>(std::lround(std::pow(static_cast<double>(d.budget), p.pool_exponent))));
  return d;
}

// E[budget] = sum_{k=1..cap} P(budget >= k) = sum min(1, (min_budget/k)^exponent).
inline double expected_budget(const DegreeProfile& p) {
  double e = 0.0;
  for (int k = 1; k <= p.cap; ++k) e += std::min(1.0, std::pow(p.min_budget / k, p.tail_exponent));
  return e;
}

// Minimum budget that makes expected_budget equal `mean` (bisection).
inline double solve_min_budget(DegreeProfile p, double mean) {
  p.min_budget = 1.0;
  if (expected_budget(p) >= mean) return 1.0;
  p.min_budget = p.cap;
  if (expected_budget(p) < mean) throw ConfigError("mean call budget exceeds degree cap");
  double lo = 1.0, hi = p.cap;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    p.min_budget = mid;
    (expected_budget(p) < mean ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline bool is_weekend_day(std::int64_t day_start, std::int64_t tz_offset) {
  return weekday_of(day_start, tz_offset) >= 5;
}

// Day index in [first, last] weighted by the weekday/weekend volume multiplier.
inline int sample_day(const TemporalProfile& prof, int first, int last, std::int64_t start_time,
                      std::int64_t tz_offset, Rng& rng) {
  std::vector<double> w;
  w.reserve(static_cast<std::size_t>(last - first + 1));
  for (int d = first; d <= last; ++d)
    w.push_back(is_weekend_day(start_time + d * kSecondsPerDay, tz_offset) ? prof.weekend_multiplier
                                                                           : prof.weekday_multiplier);
  return first + static_cast<int>(rng.categorical(w));
}

// Second-resolution timestamp inside the day starting at `day_start`; the hour
// is drawn from the profile's 24-bin categorical.
inline std::int64_t sample_timestamp(const TemporalProfile& prof, std::int64_t day_start, Rng& rng) {
  const auto hour = static_cast<std::int64_t>(rng.categorical(prof.hour_weights));
  return day_start + hour * 3600 + static_cast<std::int64_t>(rng.below(3600));
}

// ---------------------------------------------------------------------------
// Config validation and JSON

inline void validate_profile(const CallerProfile& p, const std::string& name) {
  double sum = 0.0;
  for (double w : p.temporal.hour_weights) {
    if (!(w >= 0.0)) throw ConfigError(name + ": hour weights must be >= 0");
    sum += w;
  }
  if (sum <= 0.0) throw ConfigError(name + ": hour weights sum to zero");
  if (p.temporal.weekday_multiplier < 0 || p.temporal.weekend_multiplier < 0 ||
      p.temporal.weekday_multiplier + p.temporal.weekend_multiplier <= 0)
    throw ConfigError(name + ": day-type multipliers must be >= 0 and not both zero");
  if (p.degree.min_budget < 1.0 || p.degree.cap < 1 || p.degree.tail_exponent <= 0.0)
    throw ConfigError(name + ": degree profile needs min_budget >= 1, cap >= 1, exponent > 0");
  auto frac = [&](double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(name + ": " + what + " must be in [0,1]");
  };
  frac(p.repeat_affinity, "repeat_affinity");
  frac(p.contact_rate, "contact_rate");
  frac(p.inbound_fraction, "inbound_fraction");
  frac(p.same_province_pool, "same_province_pool");
  frac(p.span.full_span_prob, "full_span_prob");
  frac(p.span.short_span_prob, "short_span_prob");
  if (p.duration_median <= 0.0 || p.duration_sigma < 0.0) throw ConfigError(name + ": invalid duration params");
}

inline void validate_config(const GeneratorConfig& c) {
  if (c.days < 1) throw ConfigError("days must be >= 1");
  if (c.provinces.empty()) throw ConfigError("at least one province is required");
  for (const auto& p : c.provinces) {
    if (!Province::parse(p.code)) throw ConfigError("invalid province code '" + p.code + "'");
    if (!(p.weight >= 0.0)) throw ConfigError("province weights must be >= 0");
  }
  if (c.n_touchpal_users < 2) throw ConfigError("n_touchpal_users must be >= 2");
  if (c.n_benign_others < 1) throw ConfigError("n_benign_others must be >= 1");
  if (c.n_malicious < 0) throw ConfigError("n_malicious must be >= 0");
  auto frac = [](double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(what) + " must be in [0,1]");
  };
  frac(c.malicious_record_fraction_target, "malicious_record_fraction_target");
  frac(c.contact_rate_malicious, "contact_rate_malicious");
  frac(c.callback_prob_malicious, "callback_prob_malicious");
  frac(c.tag_drop_prob, "tag_drop_prob");
  frac(c.business_fraction, "business_fraction");
  frac(c.service_fraction, "service_fraction");
  if (c.business_fraction + c.service_fraction > 1.0)
    throw ConfigError("business_fraction + service_fraction must not exceed 1");
  frac(c.business_tag_prob, "business_tag_prob");
  if (c.n_malicious > 0 && (c.malicious_record_fraction_target <= 0.0 || c.malicious_record_fraction_target >= 1.0))
    throw ConfigError("malicious_record_fraction_target must be in (0,1) when n_malicious > 0");
  if (c.malicious_calls_per_number_mean < 1.0) throw ConfigError("malicious_calls_per_number_mean must be >= 1");
  if (c.max_duration < 0) throw ConfigError("max_duration must be >= 0");
  if (c.touchpal_friends_min < 1 || c.touchpal_friends_max < c.touchpal_friends_min)
    throw ConfigError("invalid touchpal friend range");
  validate_profile(c.benign, "benign");
  validate_profile(c.business, "business");
  validate_profile(c.service, "service");
  validate_profile(c.malicious, "malicious");
  validate_profile(c.touchpal, "touchpal");
}

inline nlohmann::json profile_to_json(const CallerProfile& p) {
  return {{"hour_weights", p.temporal.hour_weights},
          {"weekday_multiplier", p.temporal.weekday_multiplier},
          {"weekend_multiplier", p.temporal.weekend_multiplier},
          {"min_budget", p.degree.min_budget},
          {"tail_exponent", p.degree.tail_exponent},
          {"cap", p.degree.cap},
          {"pool_exponent", p.degree.pool_exponent},
          {"full_span_prob", p.span.full_span_prob},
          {"short_span_prob", p.span.short_span_prob},
          {"repeat_affinity", p.repeat_affinity},
          {"contact_rate", p.contact_rate},
          {"duration_median", p.duration_median},
          {"duration_sigma", p.duration_sigma},
          {"inbound_fraction", p.inbound_fraction},
          {"same_province_pool", p.same_province_pool}};
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->template get<T>();
}

inline void profile_from_json(const nlohmann::json& j, CallerProfile& p) {
  read_opt(j, "hour_weights", p.temporal.hour_weights);
  read_opt(j, "weekday_multiplier", p.temporal.weekday_multiplier);
  read_opt(j, "weekend_multiplier", p.temporal.weekend_multiplier);
  read_opt(j, "min_budget", p.degree.min_budget);
  read_opt(j, "tail_exponent", p.degree.tail_exponent);
  read_opt(j, "cap", p.degree.cap);
  read_opt(j, "pool_exponent", p.degree.pool_exponent);
  read_opt(j, "full_span_prob", p.span.full_span_prob);
  read_opt(j, "short_span_prob", p.span.short_span_prob);
  read_opt(j, "repeat_affinity", p.repeat_affinity);
  read_opt(j, "contact_rate", p.contact_rate);
  read_opt(j, "duration_median", p.duration_median);
  read_opt(j, "duration_sigma", p.duration_sigma);
  read_opt(j, "inbound_fraction", p.inbound_fraction);
  read_opt(j, "same_province_pool", p.same_province_pool);
}

inline nlohmann::json config_to_json(const GeneratorConfig& c) {
  nlohmann::json provinces = nlohmann::json::array();
  for (const auto& p : c.provinces) provinces.push_back({{"code", p.code}, {"weight", p.weight}});
  return {{"seed", c.seed},
          {"days", c.days},
          {"start_time", c.start_time},
          {"tz_offset", c.tz_offset},
          {"provinces", provinces},
          {"n_touchpal_users", c.n_touchpal_users},
          {"n_benign_others", c.n_benign_others},
          {"n_malicious", c.n_malicious},
          {"malicious_calls_per_number_mean", c.malicious_calls_per_number_mean},
          {"malicious_record_fraction_target", c.malicious_record_fraction_target},
          {"contact_rate_malicious", c.contact_rate_malicious},
          {"callback_prob_malicious", c.callback_prob_malicious},
          {"tag_drop_prob", c.tag_drop_prob},
          {"business_fraction", c.business_fraction},
          {"service_fraction", c.service_fraction},
          {"business_tag_prob", c.business_tag_prob},
          {"max_duration", c.max_duration},
          {"touchpal_calls_per_user_day", c.touchpal_calls_per_user_day},
          {"touchpal_friends_min", c.touchpal_friends_min},
          {"touchpal_friends_max", c.touchpal_friends_max},
          {"profiles",
           {{"benign", profile_to_json(c.benign)},
            {"business", profile_to_json(c.business)},
            {"service", profile_to_json(c.service)},
            {"malicious", profile_to_json(c.malicious)},
            {"touchpal", profile_to_json(c.touchpal)}}}};
}

// Missing keys keep their defaults.
inline GeneratorConfig config_from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  try {
    read_opt(j, "seed", c.seed);
    read_opt(j, "days", c.days);
    read_opt(j, "start_time", c.start_time);
    read_opt(j, "tz_offset", c.tz_offset);
    if (auto it = j.find("provinces"); it != j.end()) {
      c.provinces.clear();
      for (const auto& p : *it) c.provinces.push_back({p.at("code").get<std::string>(), p.value("weight", 1.0)});
    }
    read_opt(j, "n_touchpal_users", c.n_touchpal_users);
    read_opt(j, "n_benign_others", c.n_benign_others);
    read_opt(j, "n_malicious", c.n_malicious);
    read_opt(j, "malicious_calls_per_number_mean", c.malicious_calls_per_number_mean);
    read_opt(j, "malicious_record_fraction_target", c.malicious_record_fraction_target);
    read_opt(j, "contact_rate_malicious", c.contact_rate_malicious);
    c.malicious.contact_rate = c.contact_rate_malicious;
    read_opt(j, "callback_prob_malicious", c.callback_prob_malicious);
    read_opt(j, "tag_drop_prob", c.tag_drop_prob);
    read_opt(j, "business_fraction", c.business_fraction);
    read_opt(j, "service_fraction", c.service_fraction);
    read_opt(j, "business_tag_prob", c.business_tag_prob);
    read_opt(j, "max_duration", c.max_duration);
    read_opt(j, "touchpal_calls_per_user_day", c.touchpal_calls_per_user_day);
    read_opt(j, "touchpal_friends_min", c.touchpal_friends_min);
    read_opt(j, "touchpal_friends_max", c.touchpal_friends_max);
    if (auto it = j.find("profiles"); it != j.end()) {
      if (it->contains("benign")) profile_from_json(it->at("benign"), c.benign);
      if (it->contains("business")) profile_from_json(it->at("business"), c.business);
      if (it->contains("service")) profile_from_json(it->at("service"), c.service);
      if (it->contains("malicious")) profile_from_json(it->at("malicious"), c.malicious);
      if (it->contains("touchpal")) profile_from_json(it->at("touchpal"), c.touchpal);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
  return c;
}

inline nlohmann::json labels_to_json(const std::map<PhoneId, bool>& labels) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [p, m] : labels) j[p.hex()] = m;
  return j;
}

inline std::map<PhoneId, bool> labels_from_json(const nlohmann::json& j) {
  std::map<PhoneId, bool> out;
  for (const auto& [k, v] : j.items()) {
    auto p = PhoneId::parse(k);
    if (!p || !v.is_boolean()) throw ConfigError("labels: invalid entry '" + k + "'");
    out.emplace(*p, v.get<bool>());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generation

namespace detail {

struct PendingRecord {
  CallRecord rec;
  std::uint64_t order;  // generation order; tie-break for equal timestamps
};

class LogBuilder {
public:
  LogBuilder(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg), drop_rng_(derive_seed(seed, 99)) {}

  void add_call(const PhoneId& caller, const Province& caller_prov, bool caller_tp, const PhoneId& callee,
                const Province& callee_prov, bool callee_tp, std::int64_t when, std::int64_t duration,
                bool contact_of_callee, bool contact_of_caller, CallTag tag) {
    if (callee_tp) {
      CallRecord r;
      r.user_id = callee;
      r.call_type = CallType::incoming;
      r.other_phone = caller;
      r.other_province = caller_prov;
      r.user_province = callee_prov;
      r.call_date = when;
      r.call_duration = duration;
      r.call_contact = contact_of_callee;
      r.call_tag = tag;
      push(r);
    }
    if (caller_tp) {
      CallRecord r;
      r.user_id = caller;
      r.call_type = CallType::outgoing;
      r.other_phone = callee;
      r.other_province = callee_prov;
      r.user_province = caller_prov;
      r.call_date = when;
      r.call_duration = duration;
      r.call_contact = contact_of_caller;
      r.call_tag = CallTag::none;
      push(r);
    }
  }

  // One uniform per malicious call regardless of the drop probability, so a
  // larger probability drops a superset of tags.
  bool keep_tag() { return !(drop_rng_.uniform() < cfg_.tag_drop_prob); }

  std::vector<CallRecord> finish() {
    std::sort(pending_.begin(), pending_.end(), [](const PendingRecord& a, const PendingRecord& b) {
      return a.rec.call_date != b.rec.call_date ? a.rec.call_date < b.rec.call_date : a.order < b.order;
    });
    std::vector<CallRecord> out;
    out.reserve(pending_.size());
    std::uint64_t seq = 0;
    for (auto& p : pending_) {
      p.rec.seq = seq++;
      out.push_back(p.rec);
    }
    pending_.clear();
    return out;
  }

  std::size_t size() const { return pending_.size(); }

private:
  void push(const CallRecord& r) { pending_.push_back({r, next_order_++}); }

  const GeneratorConfig& cfg_;
  Rng drop_rng_;
  std::vector<PendingRecord> pending_;
  std::uint64_t next_order_ = 0;
};

inline std::int64_t draw_duration(const CallerProfile& p, int max_duration, Rng& rng) {
  const double d = rng.lognormal(p.duration_median, p.duration_sigma);
  return std::clamp<std::int64_t>(std::llround(d), 0, max_duration);
}

inline std::pair<int, int> draw_span(const SpanProfile& s, int days, Rng& rng) {
  const double u = rng.uniform();
  if (u < s.full_span_prob || days == 1) return {0, days - 1};
  const int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(days)));
  int len;
  if (u < s.full_span_prob + s.short_span_prob) len = 1 + static_cast<int>(rng.below(3));
  else len = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(days - start)));
  return {start, std::min(days - 1, start + len - 1)};
}

}  // namespace detail

inline GeneratedLog generate_log(const GeneratorConfig& cfg_in) {
  GeneratorConfig cfg = cfg_in;
  cfg.malicious.contact_rate = cfg.contact_rate_malicious;
  validate_config(cfg);
  const std::uint64_t seed = cfg.seed;

  // Malicious budgets are calibrated so the expected calls per number match the target mean.
  if (cfg.n_malicious > 0)
    cfg.malicious.degree.min_budget = solve_min_budget(cfg.malicious.degree, cfg.malicious_calls_per_number_mean);

  std::vector<Province> provinces;
  std::vector<double> province_w;
  for (const auto& p : cfg.provinces) {
    provinces.push_back(Province::of(p.code));
    province_w.push_back(p.weight);
  }

  Rng id_rng(derive_seed(seed, 1));
  std::unordered_set<PhoneId, PhoneIdHash> used_ids;
  auto fresh_id = [&]() {
    for (;;) {
      const std::uint64_t hi = id_rng.next_u64();
      const std::uint64_t lo = id_rng.next_u64();
      PhoneId p = PhoneId::from_words(hi, lo);
      if (used_ids.insert(p).second) return p;
    }
  };

  GeneratedLog out;
  Rng actor_rng(derive_seed(seed, 2));

  // TouchPal users
  const auto n_tp = static_cast<std::size_t>(cfg.n_touchpal_users);
  std::vector<ActorProfile> tp(n_tp);
  std::vector<std::vector<std::uint32_t>> tp_by_province(provinces.size());
  std::vector<std::size_t> tp_province_index(n_tp);
  for (std::size_t i = 0; i < n_tp; ++i) {
    tp[i].id = fresh_id();
    tp[i].cls = ActorClass::touchpal;
    const std::size_t pi = actor_rng.categorical(province_w);
    tp[i].province = provinces[pi];
    tp_province_index[i] = pi;
    tp_by_province[pi].push_back(static_cast<std::uint32_t>(i));
    tp[i].first_day = 0;
    tp[i].last_day = cfg.days - 1;
  }
  auto pick_tp = [&](std::size_t province_idx, double same_province_prob, Rng& rng) -> std::uint32_t {
    const auto& local = tp_by_province[province_idx];
    if (!local.empty() && rng.bernoulli(same_province_prob))
      return local[rng.below(local.size())];
    return static_cast<std::uint32_t>(rng.below(n_tp));
  };

  detail::LogBuilder builder(cfg, seed);
  Rng call_rng(derive_seed(seed, 3));

  // Persistent contact flag per (TouchPal user, other number) pair.
  std::unordered_map<std::uint64_t, bool> contact_flags;
  auto contact_of = [&](std::uint32_t tp_idx, std::uint64_t other_key, double rate, Rng& rng) {
    const std::uint64_t key = mix64(other_key) ^ (static_cast<std::uint64_t>(tp_idx) * 0x9e3779b97f4a7c15ULL);
    auto it = contact_flags.find(key);
    if (it != contact_flags.end()) return it->second;
    const bool flag = rng.bernoulli(rate);
    contact_flags.emplace(key, flag);
    return flag;
  };

  auto day_start = [&](int d) { return cfg.start_time + static_cast<std::int64_t>(d) * kSecondsPerDay; };
  auto sorted_times = [&](const CallerProfile& prof, int first, int last, int n, Rng& rng) {
    std::vector<std::int64_t> times(static_cast<std::size_t>(n));
    for (auto& t : times) {
      const int d = sample_day(prof.temporal, first, last, cfg.start_time, cfg.tz_offset, rng);
      t = sample_timestamp(prof.temporal, day_start(d), rng);
    }
    std::sort(times.begin(), times.end());
    return times;
  };

  // Benign non-TouchPal numbers
  const auto n_others = static_cast<std::size_t>(cfg.n_benign_others);
  const CallTag business_tags[] = {CallTag::delivery, CallTag::real_estate, CallTag::sales};
  for (std::size_t i = 0; i < n_others; ++i) {
    ActorProfile a;
    a.id = fresh_id();
    a.cls = ActorClass::benign;
    const double kind = actor_rng.uniform();
    a.business = kind < cfg.business_fraction;
    a.service = !a.business && kind < cfg.business_fraction + cfg.service_fraction;
    const std::size_t pi = actor_rng.categorical(province_w);
    a.province = provinces[pi];
    const CallerProfile& prof = a.business ? cfg.business : a.service ? cfg.service : cfg.benign;
    const auto draw = sample_degree_profile(prof.degree, actor_rng);
    a.budget = draw.budget;
    a.pool_size = draw.pool;
    std::tie(a.first_day, a.last_day) = detail::draw_span(prof.span, cfg.days, actor_rng);
    const bool tagged = a.business || a.service;
    a.tag = tagged ? business_tags[actor_rng.below(3)] : CallTag::none;

    std::vector<std::uint32_t> pool(static_cast<std::size_t>(a.pool_size));
    for (auto& m : pool) m = pick_tp(pi, prof.same_province_pool, actor_rng);

    const auto times = sorted_times(prof, a.first_day, a.last_day, a.budget, call_rng);
    std::int64_t prev = -1;
    const std::uint64_t key = a.id.hash();
    for (auto t : times) {
      std::uint32_t m;
      if (prev >= 0 && call_rng.bernoulli(prof.repeat_affinity)) m = static_cast<std::uint32_t>(prev);
      else m = pool[call_rng.below(pool.size())];
      prev = m;
      const bool inbound = call_rng.bernoulli(prof.inbound_fraction);
      const bool contact = contact_of(m, key, prof.contact_rate, call_rng);
      const auto dur = detail::draw_duration(prof, cfg.max_duration, call_rng);
      if (inbound) {
        const CallTag tag = tagged && call_rng.bernoulli(cfg.business_tag_prob) ? a.tag : CallTag::none;
        builder.add_call(a.id, a.province, false, tp[m].id, tp[m].province, true, t, dur, contact, false, tag);
      } else {
        builder.add_call(tp[m].id, tp[m].province, true, a.id, a.province, false, t, dur, false, contact,
                         CallTag::none);
      }
    }
    out.labels.emplace(a.id, false);
    out.actors.push_back(a);
  }

  // Malicious numbers: spray many TouchPal users, rarely called back.
  std::size_t malicious_records = 0;
  const std::int64_t window_end = day_start(cfg.days);
  for (int i = 0; i < cfg.n_malicious; ++i) {
    ActorProfile a;
    a.id = fresh_id();
    a.cls = ActorClass::malicious;
    const std::size_t pi = actor_rng.categorical(province_w);
    a.province = provinces[pi];
    const auto draw = sample_degree_profile(cfg.malicious.degree, actor_rng);
    a.budget = draw.budget;
    a.pool_size = draw.pool;
    std::tie(a.first_day, a.last_day) = detail::draw_span(cfg.malicious.span, cfg.days, actor_rng);
    a.tag = actor_rng.bernoulli(0.5) ? CallTag::fraud : CallTag::harassment;

    const auto times = sorted_times(cfg.malicious, a.first_day, a.last_day, a.budget, call_rng);
    std::int64_t prev = -1;
    const auto& prof = cfg.malicious;
    for (auto t : times) {
      std::uint32_t m;
      if (prev >= 0 && call_rng.bernoulli(prof.repeat_affinity)) m = static_cast<std::uint32_t>(prev);
      else m = pick_tp(pi, prof.same_province_pool, call_rng);
      prev = m;
      const bool contact = call_rng.bernoulli(cfg.contact_rate_malicious);
      const auto dur = detail::draw_duration(prof, cfg.max_duration, call_rng);
      const CallTag tag = builder.keep_tag() ? a.tag : CallTag::none;
      builder.add_call(a.id, a.province, false, tp[m].id, tp[m].province, true, t, dur, contact, false, tag);
      ++malicious_records;
      if (call_rng.bernoulli(cfg.callback_prob_malicious)) {
        const std::int64_t cb = t + 60 + static_cast<std::int64_t>(call_rng.below(6 * 3600));
        const auto cb_dur = detail::draw_duration(prof, cfg.max_duration, call_rng);
        if (cb < window_end)
          builder.add_call(tp[m].id, tp[m].province, true, a.id, a.province, false, cb, cb_dur, false, contact,
                           CallTag::none);
      }
    }
    out.labels.emplace(a.id, true);
    out.actors.push_back(a);
  }

  // TouchPal-to-TouchPal traffic (two records per call).
  std::size_t filler_calls;
  if (cfg.n_malicious > 0 && malicious_records > 0) {
    const double target = cfg.malicious_record_fraction_target;
    const double total_needed = static_cast<double>(malicious_records) / target;
    const double remaining = total_needed - static_cast<double>(builder.size());
    if (remaining < 0.0)
      throw ConfigError("malicious_record_fraction_target " + std::to_string(target) +
                        " unreachable: non-TouchPal traffic alone yields fraction " +
                        std::to_string(static_cast<double>(malicious_records) / builder.size()));
    filler_calls = static_cast<std::size_t>(std::llround(remaining / 2.0));
  } else {
    filler_calls = static_cast<std::size_t>(
        std::llround(cfg.touchpal_calls_per_user_day * cfg.n_touchpal_users * cfg.days / 2.0));
  }

  Rng tp_rng(derive_seed(seed, 4));
  std::vector<std::vector<std::uint32_t>> friends(n_tp);
  std::vector<double> activity(n_tp);
  for (std::size_t i = 0; i < n_tp; ++i) {
    const int nf = cfg.touchpal_friends_min +
                   static_cast<int>(tp_rng.below(static_cast<std::uint64_t>(
                       cfg.touchpal_friends_max - cfg.touchpal_friends_min + 1)));
    for (int k = 0; k < nf; ++k) {
      std::uint32_t f;
      do {
        f = pick_tp(tp_province_index[i], cfg.touchpal.same_province_pool, tp_rng);
      } while (f == i);
      friends[i].push_back(f);
    }
    activity[i] = tp_rng.lognormal(1.0, 0.8);
  }
  std::vector<double> cumulative(n_tp);
  std::partial_sum(activity.begin(), activity.end(), cumulative.begin());
  for (std::size_t c = 0; c < filler_calls; ++c) {
    const double u = tp_rng.uniform() * cumulative.back();
    auto caller = static_cast<std::uint32_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) -
                                             cumulative.begin());
    caller = std::min<std::uint32_t>(caller, static_cast<std::uint32_t>(n_tp - 1));
    const std::uint32_t callee = friends[caller][tp_rng.below(friends[caller].size())];
    const int d = sample_day(cfg.touchpal.temporal, 0, cfg.days - 1, cfg.start_time, cfg.tz_offset, tp_rng);
    const auto t = sample_timestamp(cfg.touchpal.temporal, day_start(d), tp_rng);
    const auto dur = detail::draw_duration(cfg.touchpal, cfg.max_duration, tp_rng);
    const bool contact = tp_rng.bernoulli(cfg.touchpal.contact_rate);
    builder.add_call(tp[caller].id, tp[caller].province, true, tp[callee].id, tp[callee].province, true, t, dur,
                     contact, contact, CallTag::none);
  }

  LogMeta meta;
  for (const auto& p : cfg.provinces) meta.provinces.push_back(p.code);
  meta.seed = seed;
  meta.start_time = cfg.start_time;
  meta.days = cfg.days;
  for (const auto& u : tp) meta.touchpal_users.push_back(u.id);
  out.log = CallLog(builder.finish(), std::move(meta));
  for (auto& u : tp) out.actors.push_back(u);
  return out;
}

}  // namespace malcall
