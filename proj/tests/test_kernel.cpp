#include "support.hpp"

#include <pipekit/kernel/channel.hpp>
#include <pipekit/kernel/engine.hpp>
#include <pipekit/kernel/scheduler.hpp>
#include <pipekit/simulate.hpp>

#include <gtest/gtest.h>

using namespace pipekit;
using namespace pipekit::kernel;

namespace {

struct Item {
  std::uint64_t id = 0;
  int value = 0;
};

// ---------------------------------------------------------------------------
// Scheduler

TEST(Scheduler, TimedAndDeltaWaits) {
  Scheduler s;
  std::vector<std::pair<std::string, SimTime>> log;
  auto proc = [&](std::string name, std::uint64_t d) -> Process {
    log.emplace_back(name, s.now());
    co_await s.delay(d);
    log.emplace_back(name, s.now());
    co_await s.delay(0);
    log.emplace_back(name, s.now());
  };
  s.spawn("a", proc("a", 5));
  s.spawn("b", proc("b", 0));
  EXPECT_EQ(s.run(), Scheduler::Outcome::Idle);
  std::vector<std::pair<std::string, SimTime>> expect{
      {"a", {0, 0}}, {"b", {0, 0}}, {"b", {0, 1}}, {"b", {0, 2}}, {"a", {5, 0}}, {"a", {5, 1}}};
  EXPECT_EQ(log, expect);
  for (auto* p : s.processes())
    EXPECT_EQ(p->state, ProcessInfo::State::Finished);
}

TEST(Scheduler, HorizonStopsBeforeLaterEvents) {
  Scheduler s;
  int reached = 0;
  auto proc = [&]() -> Process {
    co_await s.delay(10);
    ++reached;
    co_await s.delay(10);
    ++reached;
  };
  s.spawn("p", proc());
  EXPECT_EQ(s.run(15), Scheduler::Outcome::Horizon);
  EXPECT_EQ(reached, 1);
  EXPECT_EQ(s.now().ns, 10u);
}

TEST(Scheduler, ProcessExceptionsPropagate) {
  Scheduler s;
  auto proc = [&]() -> Process {
    co_await s.delay(1);
    throw EvalError("boom");
  };
  s.spawn("p", proc());
  EXPECT_THROW(s.run(), EvalError);
}

// ---------------------------------------------------------------------------
// Channels

TEST(Channel, BlockingHandsOverInOrder) {
  Scheduler s;
  Channel<Item> ch(s, "c", ChannelKind::BlockingSingleSlot);
  std::vector<int> got;
  auto writer = [&]() -> Process {
    for (int i = 0; i < 3; ++i)
      co_await write(ch, Item{static_cast<std::uint64_t>(i), i * 10});
  };
  auto reader = [&]() -> Process {
    for (int i = 0; i < 3; ++i) {
      Item it = co_await ch.read();
      got.push_back(it.value);
      co_await s.delay(2);
    }
  };
  s.spawn("w", writer());
  s.spawn("r", reader());
  s.run();
  EXPECT_EQ(got, (std::vector<int>{0, 10, 20}));
  // items 1 and 2 had to wait for the slow reader
  EXPECT_EQ(ch.stalls(), 2u);
  EXPECT_EQ(ch.admitted(), 3u);
  EXPECT_EQ(ch.reads(), 3u);
}

TEST(Channel, ArbitrationByArrivalThenId) {
  Scheduler s;
  Channel<Item> ch(s, "c", ChannelKind::BlockingSingleSlot);
  std::vector<std::uint64_t> order;
  auto writer = [&](std::uint64_t id) -> Process { co_await write(ch, Item{id, 0}); };
  auto reader = [&]() -> Process {
    for (int i = 0; i < 3; ++i)
      order.push_back((co_await ch.read()).id);
  };
  s.spawn("w7", writer(7));
  s.spawn("w3", writer(3));
  s.spawn("w5", writer(5));
  s.spawn("r", reader());
  s.run();
  EXPECT_EQ(order, (std::vector<std::uint64_t>{3, 5, 7}));
  EXPECT_EQ(ch.stalls(), 2u);
}

TEST(Channel, SignalOverwritesAndCountsDrops) {
  Scheduler s;
  Channel<Item> ch(s, "c", ChannelKind::OverwriteSignal);
  std::vector<std::uint64_t> dropped;
  ch.on_drop([&](const Item& i) { dropped.push_back(i.id); });
  std::vector<int> got;
  auto writer = [&]() -> Process {
    for (int i = 0; i < 3; ++i) {
      co_await write(ch, Item{static_cast<std::uint64_t>(i), i});
      co_await s.delay(1);
    }
  };
  auto reader = [&]() -> Process {
    co_await s.delay(2);
    got.push_back((co_await ch.read()).value);
  };
  s.spawn("w", writer());
  s.spawn("r", reader());
  s.run();
  EXPECT_EQ(dropped, (std::vector<std::uint64_t>{0}));
  EXPECT_EQ(ch.drops(), 1u);
  EXPECT_EQ(got, (std::vector<int>{1}));
  EXPECT_EQ(ch.stalls(), 0u);
}

TEST(Channel, ValuesVisibleNextDelta) {
  Scheduler s;
  Channel<Item> ch(s, "c", ChannelKind::BlockingSingleSlot);
  SimTime seen{};
  auto writer = [&]() -> Process { co_await write(ch, Item{1, 1}); };
  auto reader = [&]() -> Process {
    co_await ch.read();
    seen = s.now();
  };
  s.spawn("w", writer());
  s.spawn("r", reader());
  s.run();
  EXPECT_EQ(seen, (SimTime{0, 1}));
}

TEST(Channel, DisconnectedNeverAdmits) {
  Scheduler s;
  Channel<Item> ch(s, "c", ChannelKind::BlockingSingleSlot);
  ch.disconnect();
  bool done = false;
  auto writer = [&]() -> Process {
    co_await write(ch, Item{1, 1});
    done = true;
  };
  s.spawn("w", writer());
  s.run();
  EXPECT_FALSE(done);
  EXPECT_EQ(ch.waiting_writers(), (std::vector<std::uint64_t>{1}));
  EXPECT_EQ(s.processes()[0]->state, ProcessInfo::State::BlockedWrite);
}

// ---------------------------------------------------------------------------
// Engine through the Sample bridge

struct Pipeline {
  StageSet decls;
  CheckedConfig cfg;
};

Pipeline make(const std::vector<std::string>& names, const std::string& expr,
              const std::vector<std::pair<std::string, std::string>>& fns, TimingSpec timing = Timed{1},
              std::optional<JoinSpec> join = std::nullopt) {
  auto d = declare_stages(names);
  std::vector<StageConfig> cs;
  for (const auto& [name, fn] : fns)
    cs.push_back(StageConfig{d[name], FunctionSpec::parse(fn), timing});
  return {d, validate_config(d, {{"default", parse(expr, d)}}, cs, join)};
}

Pipeline polynomial(TimingSpec timing = Timed{1}) {
  return make({"S1", "S2", "S3"}, "S1 >> S2 >> S3",
              {{"S1", "data + 2*sqr(orig)"}, {"S2", "data + 4*orig"}, {"S3", "data - 7"}}, timing);
}

Pipeline identity(const std::string& expr, TimingSpec timing = Timed{1}) {
  auto d = six_stages();
  std::vector<StageConfig> cs;
  for (const auto& s : route_of(expr, d).stages())
    cs.push_back(StageConfig{s, FunctionSpec::parse("data + 1"), timing});
  return {d, validate_config(d, {{"default", parse(expr, d)}}, cs, JoinLeft{})};
}

std::vector<double> data_of(const SampleResult& r) {
  std::vector<double> v;
  for (const auto& t : r.trace)
    v.push_back(t.payload.data);
  return v;
}

TEST(Engine, PolynomialValues) {
  auto p = polynomial();
  auto r = simulate(p.cfg, {0, 1, 2, 3});
  ASSERT_EQ(r.status, RunStatus::Completed);
  EXPECT_EQ(data_of(r), (std::vector<double>{-7, -1, 9, 23}));
  EXPECT_EQ(r.stats.throughput.value(), 1.0);
  EXPECT_EQ(r.stats.total_stalls, 0u);
}

TEST(Engine, FirstStageOutput) {
  auto p = make({"S1"}, "S1", {{"S1", "data + 2*sqr(orig)"}});
  auto r = simulate(p.cfg, {3});
  EXPECT_EQ(data_of(r), (std::vector<double>{18}));
}

TEST(Engine, LoneLatencyIsRouteLength) {
  auto p = identity("S0 >> S1 >> S2 >> S0 >> S2*2 >> S0 >> S1");
  auto r = simulate(p.cfg, {1});
  ASSERT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(r.trace[0].exited_at.ns - r.trace[0].injected_at.ns, 8u);
  EXPECT_EQ(r.trace[0].payload.data, 8);
}

TEST(Engine, StageDelayShowsInTimestamps) {
  auto p = make({"S1"}, "S1", {{"S1", "data"}}, Timed{5});
  auto r = simulate(p.cfg, {1, 2});
  ASSERT_EQ(r.trace.size(), 2u);
  EXPECT_EQ(r.trace[0].exited_at.ns, 5u);
  EXPECT_EQ(r.trace[1].injected_at.ns, 5u);
  EXPECT_EQ(r.trace[1].exited_at.ns, 10u);
  EXPECT_EQ(r.stats.stage("S1")->busy_ns, 10u);
}

TEST(Engine, UntimedStaysAtZeroNanoseconds) {
  auto p = polynomial(Untimed{});
  auto r = simulate(p.cfg, {0, 1, 2, 3});
  ASSERT_EQ(r.status, RunStatus::Completed);
  EXPECT_EQ(data_of(r), (std::vector<double>{-7, -1, 9, 23}));
  EXPECT_EQ(r.stats.final_time.ns, 0u);
  EXPECT_GT(r.stats.final_time.delta, 0u);
  EXPECT_EQ(r.stats.timed_waits, 0u);
  for (const auto& t : r.trace)
    EXPECT_EQ(t.exited_at.ns, 0u);
}

TEST(Engine, TimedZeroCountsWaitsButTakesNoTime) {
  auto p = polynomial(Timed{0});
  // greedy would still space issues one step (1 ns) apart
  auto r = simulate(p.cfg, {0, 1}, {IssueEager{}, {}, {}});
  EXPECT_EQ(data_of(r), (std::vector<double>{-7, -1}));
  EXPECT_EQ(r.stats.final_time.ns, 0u);
  EXPECT_EQ(r.stats.timed_waits, 6u);
}

TEST(Engine, LinearGreedyIssuesEveryNanosecond) {
  auto p = identity("S0 >> S1 >> S2");
  auto r = simulate(p.cfg, {1, 2, 3, 4, 5});
  EXPECT_EQ(r.issue_times_ns, (std::vector<std::uint64_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(r.stats.throughput.value(), 1.0);
}

TEST(Engine, FeedbackGreedyIssuesEveryFour) {
  auto p = identity("S0 >> S1 >> S2 >> S0 >> S2*2 >> S0 >> S1");
  std::vector<double> in(10, 1);
  auto r = simulate(p.cfg, in);
  for (std::size_t i = 1; i < r.issue_times_ns.size(); ++i)
    EXPECT_EQ(r.issue_times_ns[i] - r.issue_times_ns[i - 1], 4u);
  EXPECT_EQ(r.stats.total_stalls, 0u);
  EXPECT_DOUBLE_EQ(r.stats.throughput.value(), 0.25);
}

TEST(Engine, EagerRevisitStallsAtSharedStage) {
  auto p = identity("S0 >> S1 >> S0");
  auto r = simulate(p.cfg, {1, 2, 3, 4}, {IssueEager{}, {}, {}});
  ASSERT_EQ(r.status, RunStatus::Completed);
  EXPECT_GT(r.stats.stage("S0")->stalls, 0u);
  EXPECT_EQ(r.stats.completed, 4u);
  auto greedy = simulate(p.cfg, {1, 2, 3, 4});
  EXPECT_EQ(greedy.stats.total_stalls, 0u);
}

TEST(Engine, FixedForbiddenIntervalWarnsAndStalls) {
  auto p = identity("S0 >> S1 >> S0");
  auto r = simulate(p.cfg, {1, 2, 3, 4}, {IssueFixed{2}, {}, {}});
  ASSERT_FALSE(r.warnings.empty());
  EXPECT_NE(r.warnings.back().find("forbidden"), std::string::npos);
  EXPECT_GT(r.stats.total_stalls, 0u);
  EXPECT_EQ(r.stats.completed, 4u);
}

TEST(Engine, ItemsMatchMarksTimesCompleted) {
  auto d = six_stages();
  oracle::ExprGen gen(4);
  for (int i = 0; i < 40; ++i) {
    std::string text = gen.expr(6, 10, false);
    auto p = identity(text);
    auto r = simulate(p.cfg, {1, 2, 3});
    ASSERT_EQ(r.status, RunStatus::Completed) << text;
    auto marks = oracle::marks(oracle::expand(text));
    for (const auto& [name, m] : marks)
      EXPECT_EQ(r.stats.stage(name)->items, m.size() * 3) << text << " " << name;
  }
}

TEST(Fork, SumJoinAndSingleExit) {
  auto p = make({"S1", "S2", "S3", "S4"}, "S1 >> S2 + S3 >> S4",
                {{"S1", "orig"}, {"S2", "data + 1"}, {"S3", "data * 10"}, {"S4", "data"}}, Timed{1}, JoinSum{});
  auto r = simulate(p.cfg, {1, 2, 3});
  EXPECT_EQ(data_of(r), (std::vector<double>{12, 23, 34}));
  EXPECT_EQ(r.stats.completed, 3u);
  EXPECT_EQ(r.trace.size(), 3u);
}

TEST(Fork, MergeOrderIgnoresArrivalOrder) {
  // the left branch is slower in one config and faster in the other
  for (auto [left_delay, right_delay] : {std::pair{3, 1}, std::pair{1, 3}}) {
    auto d = declare_stages({"S1", "S2", "S3", "S4"});
    std::vector<StageConfig> cs{{d["S1"], FunctionSpec::parse("orig")},
                                {d["S2"], FunctionSpec::parse("data + 1"), Timed{std::uint64_t(left_delay)}},
                                {d["S3"], FunctionSpec::parse("data * 10"), Timed{std::uint64_t(right_delay)}},
                                {d["S4"], FunctionSpec::identity()}};
    auto cfg = validate_config(d, {{"p", parse("S1 >> S2 + S3 >> S4", d)}}, cs,
                               JoinCustom::parse("dataL - dataR"));
    auto r = simulate(cfg, {1, 2});
    EXPECT_EQ(data_of(r), (std::vector<double>{2 - 10, 3 - 20})) << left_delay;
    EXPECT_EQ(r.trace[0].exited_at.ns - r.trace[0].injected_at.ns, 5u);
  }
}

TEST(Fork, ThreeWayFork) {
  auto p = make({"S1", "S2", "S3", "S4"}, "S1 >> S2 + S3 + S4 >> S1",
                {{"S1", "data + orig"}, {"S2", "data + 1"}, {"S3", "data + 2"}, {"S4", "data + 3"}}, Timed{1},
                JoinSum{});
  auto r = simulate(p.cfg, {1});
  // S1: 1; branches 2, 3, 4 summed to 9; S1 again: 10
  EXPECT_EQ(data_of(r), (std::vector<double>{10}));
}

TEST(Fork, AtExitWithoutJoinRetiresEachCopy) {
  auto p = make({"S1", "S2", "S3"}, "S1 >> S2 + S3", {{"S1", "orig"}, {"S2", "data + 1"}, {"S3", "data + 2"}});
  auto r = simulate(p.cfg, {5});
  ASSERT_EQ(r.status, RunStatus::Completed);
  ASSERT_EQ(r.trace.size(), 2u);
  EXPECT_EQ(r.trace[0].id, r.trace[1].id);
  std::set<double> values{r.trace[0].payload.data, r.trace[1].payload.data};
  EXPECT_EQ(values, (std::set<double>{6, 7}));
  EXPECT_EQ(r.stats.completed, 1u);
}

TEST(Fork, AtExitWithJoinMerges) {
  auto p = make({"S1", "S2", "S3"}, "S1 >> S2 + S3", {{"S1", "orig"}, {"S2", "data + 1"}, {"S3", "data + 2"}},
                Timed{1}, JoinSum{});
  auto r = simulate(p.cfg, {5});
  ASSERT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(r.trace[0].payload.data, 13);
}

TEST(Fork, JoinRejectsOrigMismatch) {
  auto d = declare_stages({"S1", "S2", "S3", "S4"});
  kernel::EngineConfig<Sample> ec;
  for (const auto& s : d) {
    kernel::StageBehavior<Sample> b;
    if (s.name == "S3")
      b.apply = [](const Sample& x) { return Sample{x.orig + 1, x.data}; };
    ec.stages.emplace(s.name, b);
  }
  ec.join = [](std::span<const Sample> c) { return merge(JoinSum{}, c); };
  Engine<Sample> engine(elaborate(route_of("S1 >> S2 + S3 >> S4", d), d), ec);
  EXPECT_THROW(engine.run({Batch<Sample>{0, {Sample{1, 0}}}}), JoinError);
}

TEST(Engine, EvalErrorNamesStageAndTransaction) {
  auto p = make({"S1", "S2"}, "S1 >> S2", {{"S1", "data"}, {"S2", "orig / data"}});
  try {
    simulate(p.cfg, {1});
    FAIL();
  } catch (const EvalError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("S2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("transaction 0"), std::string::npos) << msg;
  }
}

TEST(Engine, DeadlockOnSeveredChannel) {
  auto p = identity("S0 >> S1 >> S0");
  auto net = elaborate(p.cfg);
  ASSERT_TRUE(net.sever("r_S1", "S0"));
  auto r = simulate(net, p.cfg, {InputBatch{0, {1, 2}}});
  EXPECT_EQ(r.status, RunStatus::Deadlock);
  EXPECT_NE(r.diagnostic.find("router r_S1: blocked writing"), std::string::npos) << r.diagnostic;
  EXPECT_NE(r.diagnostic.find("(severed)"), std::string::npos) << r.diagnostic;
  EXPECT_EQ(r.in_flight_ids.size(), 2u);
  EXPECT_EQ(r.stats.injected, r.stats.completed + r.stats.in_flight + r.stats.dropped);
}

TEST(Engine, DeadlockOnSeveredStageOutput) {
  auto p = identity("S0 >> S1");
  auto net = elaborate(p.cfg);
  ASSERT_TRUE(net.sever("S0", "r_S0"));
  auto r = simulate(net, p.cfg, {InputBatch{0, {1, 2}}});
  EXPECT_EQ(r.status, RunStatus::Deadlock);
  EXPECT_NE(r.diagnostic.find("stage S0: blocked writing"), std::string::npos) << r.diagnostic;
}

TEST(Engine, HorizonTruncates) {
  auto p = identity("S0 >> S1 >> S2 >> S0 >> S2*2 >> S0 >> S1");
  auto r = simulate(p.cfg, {1, 2, 3, 4, 5}, {IssueGreedy{}, ArbitrationSpec::ArrivalOrder, 10});
  EXPECT_EQ(r.status, RunStatus::HorizonReached);
  EXPECT_LE(r.stats.final_time.ns, 10u);
  EXPECT_EQ(r.stats.completed, 1u); // exits at 8; the next at 12
  EXPECT_EQ(r.stats.injected, r.stats.completed + r.stats.in_flight);
  auto full = simulate(p.cfg, {1, 2, 3, 4, 5}, {IssueGreedy{}, ArbitrationSpec::ArrivalOrder, 1000});
  EXPECT_EQ(full.status, RunStatus::Completed);
}

TEST(Engine, SignalStagesDropUnderPressure) {
  auto d = declare_stages({"S1", "S2"});
  std::vector<StageConfig> cs{{d["S1"], FunctionSpec::parse("orig"), Timed{1}},
                              {d["S2"], FunctionSpec::parse("data"), Timed{3}, ChannelKind::OverwriteSignal}};
  auto cfg = validate_config(d, {{"p", parse("S1 >> S2", d)}}, cs);
  auto r = simulate(cfg, {1, 2, 3, 4, 5, 6}, {IssueEager{}, {}, {}});
  ASSERT_EQ(r.status, RunStatus::Completed);
  EXPECT_GT(r.stats.drops, 0u);
  EXPECT_EQ(r.stats.injected, r.stats.completed + r.stats.dropped);
}

TEST(Engine, ReactiveStage) {
  auto d = declare_stages({"S1", "S2", "S3"});
  std::vector<StageConfig> cs{
      {d["S1"], FunctionSpec::parse("orig"), Timed{1}},
      {d["S2"], FunctionSpec::parse("data * 2"), Untimed{}, ChannelKind::OverwriteSignal, ExecKind::ReactiveCallback},
      {d["S3"], FunctionSpec::parse("data + 1"), Timed{1}}};
  auto cfg = validate_config(d, {{"p", parse("S1 >> S2 >> S3", d)}}, cs);
  auto r = simulate(cfg, {1, 2, 3});
  ASSERT_EQ(r.status, RunStatus::Completed);
  EXPECT_EQ(data_of(r), (std::vector<double>{3, 5, 7}));
  // the reactive stage adds no time: two timed stages
  EXPECT_EQ(r.trace[0].exited_at.ns - r.trace[0].injected_at.ns, 2u);
  EXPECT_EQ(r.stats.stage("S2")->items, 3u);
}

TEST(Engine, MultipleTransactionTypes) {
  auto d = declare_stages({"F", "A", "M"});
  std::vector<StageConfig> cs{{d["F"], FunctionSpec::parse("orig")},
                              {d["A"], FunctionSpec::parse("data + 1")},
                              {d["M"], FunctionSpec::parse("data * data")}};
  auto cfg = validate_config(d, {{"add", parse("F >> A*2", d)}, {"sq", parse("F >> M >> A", d)}}, cs);
  auto r = simulate(elaborate(cfg), cfg, {InputBatch{0, {1, 2}}, InputBatch{1, {3}}, InputBatch{0, {4}}});
  ASSERT_EQ(r.status, RunStatus::Completed);
  std::map<std::uint64_t, double> by_id;
  for (const auto& t : r.trace)
    by_id[t.id] = t.payload.data;
  EXPECT_EQ(by_id, (std::map<std::uint64_t, double>{{0, 3}, {1, 4}, {2, 10}, {3, 6}}));
  EXPECT_EQ(r.stats.total_stalls, 0u);
}

TEST(Engine, GenericPayload) {
  auto d = declare_stages({"A", "B"});
  EngineConfig<Item> ec;
  ec.stages["A"].apply = [](const Item& i) { return Item{i.id, i.value * 3}; };
  ec.stages["B"].apply = [](const Item& i) { return Item{i.id, i.value + 1}; };
  Engine<Item> engine(elaborate(route_of("A >> B >> A", d), d), ec);
  auto r = engine.run({Batch<Item>{0, {Item{0, 1}, Item{0, 2}}}});
  ASSERT_EQ(r.trace.size(), 2u);
  EXPECT_EQ(r.trace[0].payload.value, 12);
  EXPECT_EQ(r.trace[1].payload.value, 21);
}

TEST(Engine, MissingBehaviorIsAConfigError) {
  auto d = declare_stages({"A", "B"});
  EngineConfig<Sample> ec;
  ec.stages["A"];
  EXPECT_THROW(Engine<Sample>(elaborate(route_of("A >> B", d), d), ec), ConfigError);
}

// ---------------------------------------------------------------------------
// Properties

TEST(Property, DeterministicTraces) {
  oracle::ExprGen gen(8);
  for (int i = 0; i < 20; ++i) {
    std::string text = gen.expr();
    auto p = identity(text);
    for (auto issue : {IssueSpec{IssueGreedy{}}, IssueSpec{IssueEager{}}, IssueSpec{IssueFixed{2}}}) {
      auto a = simulate(p.cfg, {1, 2, 3, 4}, {issue, {}, {}});
      auto b = simulate(p.cfg, {1, 2, 3, 4}, {issue, {}, {}});
      ASSERT_EQ(a.trace.size(), b.trace.size());
      for (std::size_t k = 0; k < a.trace.size(); ++k) {
        EXPECT_EQ(a.trace[k].id, b.trace[k].id);
        EXPECT_EQ(a.trace[k].exited_at, b.trace[k].exited_at);
        EXPECT_EQ(a.trace[k].payload, b.trace[k].payload);
      }
      EXPECT_EQ(a.stats.total_stalls, b.stats.total_stalls);
    }
  }
}

TEST(Property, ConservationUnderEveryIssuePolicy) {
  oracle::ExprGen gen(9);
  for (int i = 0; i < 40; ++i) {
    std::string text = gen.expr();
    auto p = identity(text);
    for (auto issue : {IssueSpec{IssueGreedy{}}, IssueSpec{IssueEager{}}, IssueSpec{IssueFixed{1}}}) {
      auto r = simulate(p.cfg, {1, 2, 3, 4, 5}, {issue, {}, {}});
      EXPECT_EQ(r.stats.injected, r.stats.completed + r.stats.in_flight + r.stats.dropped) << text;
      EXPECT_EQ(r.in_flight_ids.size(), r.stats.in_flight) << text;
    }
  }
}

TEST(Property, GreedyCompletesWithOneExitPerTransaction) {
  oracle::ExprGen gen(10);
  for (int i = 0; i < 40; ++i) {
    std::string text = gen.expr();
    if (route_of(text, six_stages()).exit().size() > 1)
      continue; // copies retire separately at a forked exit
    auto p = identity(text);
    auto r = simulate(p.cfg, {1, 2, 3, 4, 5});
    ASSERT_EQ(r.status, RunStatus::Completed) << text;
    EXPECT_EQ(r.stats.completed, 5u);
    EXPECT_EQ(r.trace.size(), 5u) << text;
  }
}

TEST(Engine, EagerFillsASelfLoopUntilDeadlock) {
  // entry, S0 and r_S0 each hold one transaction and wait on each other
  auto p = identity("S0 >> S0 >> S0 >> S0");
  auto r = simulate(p.cfg, {1, 2, 3, 4, 5}, {IssueEager{}, {}, {}});
  EXPECT_EQ(r.status, RunStatus::Deadlock);
  EXPECT_NE(r.diagnostic.find("router r_S0: blocked writing"), std::string::npos) << r.diagnostic;
  EXPECT_NE(r.diagnostic.find("stage S0: blocked writing"), std::string::npos) << r.diagnostic;
  auto greedy = simulate(p.cfg, {1, 2, 3, 4, 5});
  EXPECT_EQ(greedy.status, RunStatus::Completed);
}

TEST(Property, LoneLatencyIsSumOfStepMaxima) {
  std::mt19937 rng(12);
  oracle::ExprGen gen(13);
  for (int i = 0; i < 40; ++i) {
    std::string text = gen.expr();
    auto d = six_stages();
    auto route = route_of(text, d);
    std::map<std::string, std::uint64_t> delay;
    std::vector<StageConfig> cs;
    for (const auto& s : route.stages()) {
      delay[s.name] = std::uniform_int_distribution<std::uint64_t>(1, 4)(rng);
      cs.push_back(StageConfig{s, FunctionSpec::identity(), Timed{delay[s.name]}});
    }
    auto cfg = validate_config(d, {{"p", parse(text, d)}}, cs, JoinLeft{});
    auto r = simulate(cfg, {1});
    std::uint64_t expect = 0;
    for (const auto& step : oracle::expand(text)) {
      std::uint64_t m = 0;
      for (const auto& s : step)
        m = std::max(m, delay[s]);
      expect += m;
    }
    ASSERT_FALSE(r.trace.empty());
    EXPECT_EQ(r.trace.back().exited_at.ns, expect) << text;
  }
}

TEST(Property, GreedyNeverDoubleBooksAStage) {
  oracle::ExprGen gen(14);
  for (int i = 0; i < 40; ++i) {
    std::string text = gen.expr();
    auto p = identity(text);
    auto r = simulate(p.cfg, std::vector<double>(8, 1));
    EXPECT_EQ(oracle::conflicts(oracle::expand(text), r.issue_times_ns), 0u) << text;
    EXPECT_EQ(r.stats.total_stalls, 0u) << text;
  }
}

TEST(Property, ConflictFreeConstantIntervalsNeverStall) {
  oracle::ExprGen gen(16);
  for (int i = 0; i < 60; ++i) {
    std::string text = gen.expr();
    auto p = identity(text);
    auto steps = oracle::expand(text);
    for (std::size_t d = 1; d <= steps.size(); ++d) {
      std::vector<std::uint64_t> nominal;
      for (std::uint64_t k = 0; k < 8; ++k)
        nominal.push_back(k * d);
      if (oracle::conflicts(steps, nominal) != 0)
        continue;
      auto r = simulate(p.cfg, std::vector<double>(8, 1), {IssueFixed{d}, {}, {}});
      EXPECT_EQ(r.status, RunStatus::Completed) << text << " fixed:" << d;
      EXPECT_EQ(r.stats.total_stalls, 0u) << text << " fixed:" << d;
      EXPECT_EQ(r.issue_times_ns, nominal) << text << " fixed:" << d;
    }
  }
}

TEST(Property, UntimedRunsEndAtZero) {
  oracle::ExprGen gen(15);
  for (int i = 0; i < 30; ++i) {
    std::string text = gen.expr();
    auto p = identity(text, Untimed{});
    auto r = simulate(p.cfg, {1, 2, 3});
    EXPECT_EQ(r.stats.final_time.ns, 0u) << text;
    EXPECT_EQ(r.stats.timed_waits, 0u);
  }
}

} // namespace
