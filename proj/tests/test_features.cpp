#include <cmath>

#include <gtest/gtest.h>

#include "malcall/dataset.hpp"
#include "malcall/features.hpp"
#include "malcall/synthgen.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace malcall;

namespace {

const PhoneId U1 = PhoneId::from_words(0, 1), U2 = PhoneId::from_words(0, 2);
const PhoneId A = PhoneId::from_words(1, 0xa), B = PhoneId::from_words(1, 0xb);

CallRecord rec(std::uint64_t seq, std::int64_t t, PhoneId user, CallType type, PhoneId other, std::int64_t dur = 10,
               const char* other_prov = "BJ") {
  CallRecord r;
  r.seq = seq;
  r.call_date = t;
  r.user_id = user;
  r.call_type = type;
  r.other_phone = other;
  r.other_province = Province::of(other_prov);
  r.user_province = Province::of("BJ");
  r.call_duration = dur;
  return r;
}

// U1, U2 are TouchPal users; A and B are outside numbers.
CallLog hand_log() {
  LogMeta m;
  m.provinces = {"BJ", "GD"};
  m.days = 1;
  m.touchpal_users = {U1, U2};
  std::vector<CallRecord> rs = {
      rec(0, 100, U1, CallType::incoming, A, 30, "GD"),
      rec(1, 200, U1, CallType::outgoing, A, 50, "GD"),
      rec(2, 300, U1, CallType::incoming, A, 7, "GD"),
      rec(3, 400, U1, CallType::outgoing, U2),  // mirror leg
      rec(4, 400, U2, CallType::incoming, U1),
      rec(5, 500, U1, CallType::incoming, B),
  };
  rs[0].call_contact = true;
  return CallLog(rs, m);
}

}  // namespace

TEST(Features, HandLogValues) {
  const auto log = hand_log();
  const auto ex = extract_all(log, {{A, true}, {B, false}});
  ASSERT_EQ(ex.size(), 3u);  // records 0, 2, 5; record 4 has a TouchPal caller
  EXPECT_EQ(ex[0].record_index, 0u);
  EXPECT_EQ(ex[1].record_index, 2u);
  EXPECT_EQ(ex[2].record_index, 5u);
  EXPECT_TRUE(ex[0].malicious);
  EXPECT_FALSE(ex[2].malicious);

  const auto& f0 = ex[0].raw;
  EXPECT_EQ(f0[Feature::is_in_contact], 1.0);
  EXPECT_EQ(f0[Feature::same_location], 0.0);
  EXPECT_EQ(f0[Feature::caller_outs], 0.0);
  EXPECT_EQ(f0[Feature::n_call], 1.0);
  EXPECT_EQ(f0.history_len, 0.0);
  EXPECT_EQ(f0[Feature::hist_duration], 0.0);

  const auto& f2 = ex[1].raw;
  EXPECT_EQ(f2[Feature::caller_outs], 1.0);
  EXPECT_EQ(f2[Feature::caller_ins], 1.0);
  EXPECT_EQ(f2[Feature::caller_outdegree], 1.0);
  EXPECT_EQ(f2[Feature::caller_indegree], 1.0);
  EXPECT_EQ(f2[Feature::callee_ins], 1.0);
  EXPECT_EQ(f2[Feature::n_call], 3.0);
  EXPECT_EQ(f2.history_len, 2.0);
  EXPECT_EQ(f2[Feature::hist_call_type], 0.5);
  EXPECT_EQ(f2[Feature::hist_duration], 40.0);
  EXPECT_EQ(f2[Feature::hist_is_in_contact], 0.5);
  EXPECT_EQ(f2[Feature::hist_is_redial], 0.5);  // record 1 calls back the last counterpart
  EXPECT_EQ(f2[Feature::hist_gap_to_next], 100.0);
  EXPECT_EQ(f2[Feature::hist_caller_ins], 0.5);  // callers A then U1, with 0 and 1 prior incoming calls

  // The TouchPal-to-TouchPal call counts once, through its incoming leg.
  const auto& f5 = ex[2].raw;
  EXPECT_EQ(f5[Feature::callee_outs], 2.0);
  EXPECT_EQ(f5[Feature::callee_ins], 2.0);
  EXPECT_EQ(f5[Feature::callee_outdegree], 2.0);
  EXPECT_EQ(f5[Feature::callee_indegree], 1.0);
  EXPECT_EQ(f5[Feature::n_call], 1.0);
  EXPECT_EQ(f5[Feature::same_location], 1.0);
}

TEST(Features, MatchesRescanOracle) {
  for (std::uint64_t s = 0; s < 3; ++s) {
    for (std::size_t cap : {std::size_t{100}, std::size_t{3}}) {
      const auto g = generate_log(test::tiny_config(100 + s));
      FeatureOptions opt;
      opt.history_cap = cap;
      const oracle::Rescan o(g.log);
      for (const auto& e : extract_all(g.log, g.labels, opt)) {
        const auto want = o.features(e.record_index, cap);
        for (std::size_t k = 0; k < kNumFeatures; ++k)
          ASSERT_NEAR(e.raw.values[k], want[k], 1e-9 * std::max(1.0, std::abs(want[k])))
              << kFeatureNames[k] << " at record " << e.record_index;
        ASSERT_EQ(e.raw.history_len, want[29]);
      }
    }
  }
}

TEST(Features, StreamingContractErrors) {
  const auto log = hand_log();
  CounterState st;
  EXPECT_THROW(extract_example(log, st, log[1], {}), ContractError);
  EXPECT_THROW(extract_example(log, st, log[4], {}), ContractError);
  st.update(log[2]);
  EXPECT_THROW(st.update(log[0]), OrderingError);
}

TEST(Selector, WidthsAndCounts) {
  struct Case {
    FeatureSelector sel;
    std::size_t features, width;
  };
  const Case cases[] = {{FeatureSelector::all(), 29, 59},
                        {FeatureSelector::no_historic(), 13, 42},
                        {FeatureSelector::no_crossref(), 10, 40},
                        {FeatureSelector::basic(), 4, 33}};
  std::set<std::uint64_t> prints;
  for (const auto& c : cases) {
    EXPECT_EQ(c.sel.feature_count(), c.features) << c.sel.name();
    Schema s(c.sel);
    EXPECT_EQ(s.width(), c.width) << c.sel.name();
    EXPECT_EQ(FeatureSelector::parse(c.sel.name()).mask(), c.sel.mask());
    prints.insert(s.fingerprint());
  }
  EXPECT_EQ(prints.size(), 4u);
  EXPECT_THROW(FeatureSelector::parse("some"), ConfigError);
  EXPECT_THROW(FeatureSelector::parse("top10:n_call,hour"), ContractError);
  EXPECT_THROW(FeatureSelector::parse("custom:n_call,nope"), ConfigError);
}

TEST(Selector, Top10NameRoundTrip) {
  const auto sel = FeatureSelector::parse(
      "top10:hist_is_redial,caller_outdegree,hist_duration,n_call,hour,callee_ins,hist_hour,"
      "is_in_contact,caller_ins,hist_gap_to_next");
  EXPECT_EQ(sel.feature_count(), 10u);
  EXPECT_TRUE(sel.has_historic());
  EXPECT_EQ(FeatureSelector::parse(sel.name()).mask(), sel.mask());
}

TEST(Encoding, DecodeInvertsEncode) {
  Rng rng(5);
  for (const auto& sel : {FeatureSelector::all(), FeatureSelector::no_historic(), FeatureSelector::basic()}) {
    const auto schema = std::make_shared<const Schema>(sel);
    for (int t = 0; t < 200; ++t) {
      RawFeatures raw;
      for (std::size_t k = 0; k < kNumFeatures; ++k) raw.values[k] = static_cast<double>(rng.below(50));
      raw[Feature::weekday] = static_cast<double>(rng.below(7));
      raw[Feature::hour] = static_cast<double>(rng.below(24));
      raw[Feature::is_in_contact] = static_cast<double>(rng.below(2));
      raw[Feature::same_location] = static_cast<double>(rng.below(2));
      raw.history_len = static_cast<double>(rng.below(100));
      const auto v = encode(raw, schema);
      ASSERT_EQ(v.values.size(), schema->width());
      const auto back = decode(v.values, *schema);
      for (std::size_t k = 0; k < kNumFeatures; ++k) {
        const double want = sel.mask().test(k) ? raw.values[k] : 0.0;
        ASSERT_NEAR(back.values[k], want, 1e-9 * std::max(1.0, want));
      }
      if (sel.has_historic()) ASSERT_NEAR(back.history_len, raw.history_len, 1e-9 * std::max(1.0, raw.history_len));
    }
  }
}

TEST(Encoding, OneHotHasSingleOne) {
  const Schema s(FeatureSelector::basic());
  RawFeatures raw;
  raw[Feature::hour] = 23;
  raw[Feature::weekday] = 6;
  std::vector<double> out(s.width());
  encode_into(raw, s, out);
  for (const auto& e : s.entries()) {
    if (e.encoding != Encoding::one_hot) continue;
    double sum = 0;
    for (std::size_t k = 0; k < e.width; ++k) sum += out[e.offset + k];
    EXPECT_EQ(sum, 1.0);
  }
  EXPECT_EQ(s.column_name(s.width() - 1), "same_location");
}

TEST(Dataset, BalancedSamplingByNumber) {
  const auto g = generate_log(test::tiny_config(31));
  const auto ex = extract_all(g.log, g.labels);
  const auto d = build_dataset(ex, FeatureSelector::all(), Sampling::balanced(7));
  std::set<PhoneId> mal, ben;
  for (std::size_t i = 0; i < d.rows(); ++i) (d.y[i] ? mal : ben).insert(d.group[i]);
  EXPECT_EQ(mal.size(), ben.size());
  EXPECT_EQ(d.x.size(), d.rows() * d.cols);
  const auto again = build_dataset(ex, FeatureSelector::all(), Sampling::balanced(7));
  EXPECT_EQ(again.x, d.x);
  const auto full = build_dataset(ex, FeatureSelector::all(), Sampling::all_benign());
  EXPECT_EQ(full.rows(), ex.size());
}
