#include <sstream>

#include <gtest/gtest.h>

#include "malcall/blacklist.hpp"
#include "malcall/synthgen.hpp"
#include "support.hpp"

using namespace malcall;

namespace {

std::string dump(const CallLog& log) {
  std::ostringstream ss;
  write_jsonl(ss, log);
  return ss.str();
}

std::vector<PhoneId> malicious_numbers(const GeneratedLog& g) {
  std::vector<PhoneId> out;
  for (const auto& [p, m] : g.labels)
    if (m) out.push_back(p);
  return out;
}

}  // namespace

TEST(Synthgen, SameSeedSameBytes) {
  const auto a = generate_log(test::tiny_config(11));
  const auto b = generate_log(test::tiny_config(11));
  EXPECT_EQ(dump(a.log), dump(b.log));
  EXPECT_EQ(a.labels, b.labels);
  const auto c = generate_log(test::tiny_config(12));
  EXPECT_NE(dump(a.log), dump(c.log));
}

TEST(Synthgen, LogsSatisfyInvariants) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto g = generate_log(test::tiny_config(s));
    EXPECT_TRUE(validate_log(g.log).empty()) << "seed " << s;
    const auto& meta = g.log.meta();
    const std::int64_t end = meta.start_time + meta.days * kSecondsPerDay;
    for (const auto& r : g.log.records()) {
      ASSERT_GE(r.call_date, meta.start_time);
      ASSERT_LT(r.call_date, end);
      ASSERT_TRUE(g.log.is_touchpal(r.user_id));
    }
  }
}

TEST(Synthgen, LabelsCoverEveryOutsideNumber) {
  const auto g = generate_log(test::tiny_config(3));
  for (const auto& r : g.log.records())
    if (!g.log.is_touchpal(r.other_phone)) ASSERT_TRUE(g.labels.contains(r.other_phone));
  for (const auto& p : g.log.meta().touchpal_users) EXPECT_FALSE(g.labels.contains(p));
  EXPECT_EQ(malicious_numbers(g).size(), 4u);
}

TEST(Synthgen, MaliciousTagsComeFromMaliciousCallers) {
  const auto g = generate_log(test::tiny_config(8));
  std::size_t tagged = 0;
  for (const auto& r : g.log.records()) {
    if (!is_malicious(r.call_tag)) continue;
    ++tagged;
    ASSERT_EQ(r.call_type, CallType::incoming);
    ASSERT_TRUE(g.labels.at(r.other_phone));
  }
  EXPECT_GT(tagged, 0u);
}

TEST(Synthgen, ConfigJsonRoundTrip) {
  auto c = test::tiny_config(9);
  c.tag_drop_prob = 0.25;
  c.business.duration_median = 31.0;
  const auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  EXPECT_EQ(dump(generate_log(back).log), dump(generate_log(c).log));
}

TEST(Synthgen, RejectsBadConfigs) {
  auto c = test::tiny_config(0);
  c.days = 0;
  EXPECT_THROW(generate_log(c), ConfigError);
  c = test::tiny_config(0);
  c.business_fraction = 0.7;
  c.service_fraction = 0.4;
  EXPECT_THROW(generate_log(c), ConfigError);
  c = test::tiny_config(0);
  c.provinces.clear();
  EXPECT_THROW(generate_log(c), ConfigError);
  c = test::tiny_config(0);
  c.malicious_record_fraction_target = 1.0;
  EXPECT_THROW(generate_log(c), ConfigError);
  EXPECT_THROW(config_from_json({{"days", "many"}}), ConfigError);
}

// Dropping labels can only delay blacklisting: the drop draws come from their
// own stream, so a higher drop probability removes a superset of tags.
TEST(Synthgen, TagDropDelaysBlacklist) {
  double previous = 0.0;
  std::size_t previous_tags = SIZE_MAX;
  for (double q : {0.0, 0.2, 0.5, 0.9}) {
    auto c = test::tiny_config(21);
    c.tag_drop_prob = q;
    const auto g = generate_log(c);
    const auto mal = malicious_numbers(g);
    std::size_t tags = 0;
    for (const auto& r : g.log.records()) tags += is_malicious(r.call_tag);
    EXPECT_LE(tags, previous_tags);
    previous_tags = tags;
    const double afp = baseline_afp_replay(g.log, mal, 10);
    EXPECT_GE(afp, previous) << "q=" << q;
    previous = afp;
  }
}
