#include <gtest/gtest.h>

#include "malcall/blacklist.hpp"

using namespace malcall;

namespace {

const PhoneId U = PhoneId::from_words(0, 1);
const PhoneId X = PhoneId::from_words(2, 0), Y = PhoneId::from_words(3, 0);

CallLog calls_from(const std::vector<std::pair<PhoneId, CallTag>>& calls) {
  std::vector<CallRecord> rs;
  for (std::size_t i = 0; i < calls.size(); ++i) {
    CallRecord r;
    r.seq = i;
    r.call_date = static_cast<std::int64_t>(i);
    r.user_id = U;
    r.other_phone = calls[i].first;
    r.call_tag = calls[i].second;
    r.other_province = r.user_province = Province::of("BJ");
    rs.push_back(r);
  }
  LogMeta m;
  m.touchpal_users = {U};
  m.days = 1;
  return CallLog(rs, m);
}

}  // namespace

TEST(Blacklist, BlocksAtThreshold) {
  BlacklistState s(3);
  for (int i = 0; i < 2; ++i) s.process_label(X, CallTag::fraud);
  s.process_label(X, CallTag::sales);
  EXPECT_FALSE(s.blocked(X));
  s.process_label(X, CallTag::harassment);
  EXPECT_TRUE(s.blocked(X));
  EXPECT_EQ(s.count(X), 3u);
  EXPECT_FALSE(s.blocked(Y));
  s.set_threshold(Y, 1);
  s.process_label(Y, CallTag::fraud);
  EXPECT_TRUE(s.blocked(Y));
  const auto snap = s.snapshot();
  EXPECT_EQ(snap[X.hex()]["count"], 3);
  EXPECT_EQ(snap[Y.hex()]["threshold"], 1);
  EXPECT_THROW(BlacklistState(0), ContractError);
  EXPECT_THROW(s.set_threshold(X, 0), ContractError);
}

TEST(Blacklist, BaselineUnderFullLabeling) {
  const std::vector<int> calls(50);
  for (int M : {1, 10, 30}) EXPECT_EQ(baseline_fp(calls, M), M + 1);
  EXPECT_THROW(baseline_fp(std::vector<int>{}, 10), ContractError);

  std::vector<std::pair<PhoneId, CallTag>> seq(40, {X, CallTag::fraud});
  const auto log = calls_from(seq);
  for (std::size_t M : {1u, 10u, 30u}) EXPECT_EQ(replay_first_blocked(log, X, M), M + 1);
}

TEST(Blacklist, ReplayWithMissingLabels) {
  // Every other call carries a tag: call 2M+1 is the first to meet a blocked number.
  std::vector<std::pair<PhoneId, CallTag>> seq;
  for (int i = 0; i < 40; ++i) seq.push_back({X, i % 2 ? CallTag::fraud : CallTag::none});
  for (int i = 0; i < 5; ++i) seq.push_back({Y, CallTag::none});
  const auto log = calls_from(seq);
  EXPECT_EQ(replay_first_blocked(log, X, 5), 11u);
  EXPECT_EQ(replay_first_blocked(log, Y, 5), 6u);  // never blocked: calls + 1
  const std::vector<PhoneId> both{X, Y};
  EXPECT_DOUBLE_EQ(baseline_afp_replay(log, both, 5), (11.0 + 6.0) / 2.0);
  EXPECT_THROW(baseline_afp_replay(log, {}, 5), ContractError);
}
