#pragma once

// Executes an elaborated netlist. The entry router issues transactions into
// the first step according to the issue policy; each stage runs read -> function -> wait -> advance -> write, and each
// stage's router forwards by the step the transaction just completed,
// duplicating on forks and merging branch copies before their successor.
// Routers take zero simulated time.

#include <pipekit/analysis.hpp>
#include <pipekit/elaborate.hpp>
#include <pipekit/kernel/channel.hpp>
#include <pipekit/kernel/scheduler.hpp>
#include <pipekit/policy.hpp>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace pipekit::kernel {

template <class Payload>
struct Transaction {
  std::uint64_t id = 0;
  Payload payload{};
  std::size_t route = 0;             // index into Netlist::routes
  std::size_t step = 0;              // == route length once the last stage is done
  std::optional<StageId> branch;     // stage the transaction is headed for or occupying
  SimTime injected_at{};
  SimTime exited_at{};

  void advance() { ++step; }
};

template <class Payload>
struct TraceRecord {
  std::uint64_t id = 0;
  std::size_t route = 0;
  SimTime injected_at{};
  SimTime exited_at{};
  Payload payload{};
};

struct StageStats {
  std::string name;
  std::uint64_t items = 0;         // occupancies completed
  std::uint64_t busy_ns = 0;       // time spent in the stage's timing wait
  std::uint64_t stalls = 0;        // writes into the stage's input that had to wait
  std::uint64_t output_stalls = 0; // stage writes that waited on its router
  std::uint64_t drops = 0;         // values overwritten on the stage's input
};

struct RunStats {
  std::vector<StageStats> stages; // netlist stage order
  std::uint64_t injected = 0;
  std::uint64_t completed = 0;
  std::uint64_t in_flight = 0;
  std::uint64_t dropped = 0;       // transactions lost to signal overwrites
  std::uint64_t issue_stalls = 0;
  std::uint64_t total_stalls = 0;  // every suspended write on every channel
  std::uint64_t drops = 0;         // overwritten values on every channel
  std::uint64_t timed_waits = 0;   // stage-level timed-wait invocations
  SimTime final_time{};
  std::optional<double> throughput; // completions per ns between first and last exit

  const StageStats* stage(const std::string& name) const {
    for (const auto& s : stages)
      if (s.name == name)
        return &s;
    return nullptr;
  }
};

enum class RunStatus { Completed, Deadlock, HorizonReached };

inline const char* to_string(RunStatus s) {
  switch (s) {
  case RunStatus::Completed: return "completed";
  case RunStatus::Deadlock: return "deadlock";
  case RunStatus::HorizonReached: return "horizon";
  }
  return "?";
}

template <class Payload>
struct RunResult {
  RunStatus status = RunStatus::Completed;
  std::string diagnostic;
  std::vector<TraceRecord<Payload>> trace; // retirement order
  RunStats stats;
  std::vector<std::uint64_t> in_flight_ids;
  std::vector<std::uint64_t> issue_times_ns; // when each transaction was offered to the entry
  std::vector<std::string> warnings;
};

template <class Payload>
struct StageBehavior {
  std::function<Payload(const Payload&)> apply = [](const Payload& p) { return p; };
  TimingSpec timing = Timed{1};
  ExecKind exec = ExecKind::SuspendableLoop;
};

template <class Payload>
struct EngineConfig {
  std::map<std::string, StageBehavior<Payload>> stages; // by stage name
  /// Merges branch copies ordered by fork position. Empty: forks must not rejoin.
  std::function<Payload(std::span<const Payload>)> join;
  IssueSpec issue = IssueGreedy{};
  ArbitrationSpec arbitration = ArbitrationSpec::ArrivalOrder;
  std::optional<std::uint64_t> horizon_ns;
};

template <class Payload>
struct Batch {
  std::size_t route = 0;
  std::vector<Payload> inputs;
};

/// Engine instances are reusable; each run() builds fresh simulation state.
template <class Payload>
class Engine {
public:
  Engine(Netlist netlist, EngineConfig<Payload> config)
      : net_(std::move(netlist)), cfg_(std::move(config)) {
    for (const auto& s : net_.stages)
      if (!cfg_.stages.count(s.stage.name))
        throw ConfigError("no behavior for stage \"" + s.stage.name + "\"");
    for (const auto& [name, b] : cfg_.stages)
      if (b.exec == ExecKind::ReactiveCallback && delay_of(b.timing) > 0)
        throw ConfigError("stage \"" + name + "\": reactive execution cannot wait");
    for (const auto& e : net_.channels)
      if (e.from.kind == NodeRef::Kind::Stage && e.to.kind == NodeRef::Kind::Stage)
        throw ElaborationError("channel connects two stages directly");
  }

  const Netlist& netlist() const noexcept { return net_; }

  RunResult<Payload> run(const std::vector<Batch<Payload>>& batches) const {
    Run r(net_, cfg_, batches);
    return r.execute();
  }

private:
  using Txn = Transaction<Payload>;
  using Chan = Channel<Txn>;

  class Run {
  public:
    Run(const Netlist& net, const EngineConfig<Payload>& cfg, const std::vector<Batch<Payload>>& batches)
        : net_(net), cfg_(cfg), batches_(batches) {
      for (const auto& b : batches_) {
        if (b.route >= net_.routes.size())
          throw ConfigError("batch refers to unknown route " + std::to_string(b.route));
        total_inputs_ += b.inputs.size();
      }
      for (const auto& route : net_.routes) {
        auto table = reservation_table(route);
        auto f = forbidden_latencies(table);
        forbidden_.push_back(f);
        machines_.emplace_back(collision_vector(f, route.length()));
      }
      all_untimed_ = std::all_of(cfg_.stages.begin(), cfg_.stages.end(),
                                 [](const auto& kv) { return is_untimed(kv.second.timing); });
      // One reservation-table step lasts as long as the slowest stage.
      for (const auto& [name, b] : cfg_.stages)
        step_ns_ = std::max(step_ns_, delay_of(b.timing));
      check_issue_policy();
      build();
    }

    RunResult<Payload> execute() {
      auto outcome = sched_.run(cfg_.horizon_ns);
      RunResult<Payload> out;
      out.trace = std::move(trace_);
      out.issue_times_ns = std::move(issue_times_);
      out.warnings = std::move(warnings_);
      for (std::uint64_t id = 0; id < injected_; ++id)
        if (!exited_.count(id) && !dropped_.count(id))
          out.in_flight_ids.push_back(id);
      bool done = issued_all_ && out.in_flight_ids.empty() && joins_.empty();
      if (outcome == Scheduler::Outcome::Horizon)
        out.status = done ? RunStatus::Completed : RunStatus::HorizonReached;
      else
        out.status = done ? RunStatus::Completed : RunStatus::Deadlock;
      out.stats = stats(out);
      if (out.status == RunStatus::Deadlock)
        out.diagnostic = deadlock_report(out);
      else if (out.status == RunStatus::HorizonReached)
        out.diagnostic = "horizon of " + std::to_string(*cfg_.horizon_ns) + " ns reached with " +
                         std::to_string(out.in_flight_ids.size()) + " transaction(s) in flight";
      return out;
    }

  private:
    void check_issue_policy() {
      if (const auto* fixed = std::get_if<IssueFixed>(&cfg_.issue)) {
        for (std::size_t r = 0; r < net_.routes.size(); ++r)
          if (fixed->interval % step_ns_ == 0 && forbidden_[r].contains(fixed->interval / step_ns_))
            warnings_.push_back("issue interval " + std::to_string(fixed->interval) +
                                " is a forbidden latency for pipeline \"" + net_.route_names[r] +
                                "\"; expect stalls");
      }
      if (all_untimed_ && !std::holds_alternative<IssueEager>(cfg_.issue))
        warnings_.push_back("untimed pipeline: issue latencies have no time base, issuing eagerly");
    }

    Chan& make_channel(std::string name, ChannelKind kind) {
      channels_.push_back(std::make_unique<Chan>(sched_, std::move(name), kind, cfg_.arbitration));
      Chan& ch = *channels_.back();
      ch.on_drop([this](const Txn& t) {
        dropped_.insert(t.id);
        std::erase_if(joins_, [&](const auto& kv) { return std::get<0>(kv.first) == t.id; });
      });
      return ch;
    }

    void build() {
      const std::size_t n = net_.stages.size();

      std::vector<ChannelKind> in_kind(n, ChannelKind::BlockingSingleSlot);
      std::vector<ChannelKind> out_kind(n, ChannelKind::BlockingSingleSlot);
      std::vector<bool> out_bound(n, false);
      for (const auto& e : net_.channels) {
        if (e.to.kind == NodeRef::Kind::Stage)
          in_kind[e.to.index] = e.kind;
        if (e.from.kind == NodeRef::Kind::Stage) {
          if (e.to.kind != NodeRef::Kind::Router || e.to.index != net_.router_of_stage(e.from.index))
            throw ElaborationError("stage output must feed its own router");
          out_kind[e.from.index] = e.kind;
          out_bound[e.from.index] = true;
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        const auto& name = net_.stages[i].stage.name;
        stage_in_.push_back(&make_channel(name + ".in", in_kind[i]));
        stage_out_.push_back(&make_channel(name + ".out" + (out_bound[i] ? "" : " (severed)"), out_kind[i]));
        if (out_bound[i]) {
          router_in_.push_back(stage_out_.back());
        } else {
          stage_out_.back()->disconnect();
          router_in_.push_back(&make_channel(net_.routers[net_.router_of_stage(i)].name + ".in (severed)",
                                             out_kind[i]));
        }
      }
      ports_.resize(net_.routers.size());
      for (const auto& e : net_.channels)
        if (e.from.kind == NodeRef::Kind::Router && e.to.kind == NodeRef::Kind::Stage)
          ports_[e.from.index][e.to.index] = stage_in_[e.to.index];

      stage_stats_.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        stage_stats_[i].name = net_.stages[i].stage.name;

      sched_.spawn("router entry", issue());
      for (std::size_t i = 0; i < n; ++i) {
        const auto& name = net_.stages[i].stage.name;
        const auto& behavior = cfg_.stages.at(name);
        if (behavior.exec == ExecKind::ReactiveCallback) {
          ProcessInfo& info = sched_.describe("stage " + name + " (reactive)");
          info.detail = stage_in_[i]->name();
          stage_in_[i]->on_ready([this, i, &behavior] { react(i, behavior); });
        } else if (is_untimed(behavior.timing)) {
          sched_.spawn("stage " + name, stage_loop(i, UntimedPolicy{}));
        } else {
          sched_.spawn("stage " + name, stage_loop(i, TimedPolicy{delay_of(behavior.timing)}));
        }
        sched_.spawn("router " + net_.routers[net_.router_of_stage(i)].name, stage_router(i));
      }
    }

    // -- processes -----------------------------------------------------------

    // Entry router: issues each input when the policy allows and dispatches it
    // to the route's first step.
    Process issue() {
      std::uint64_t next_ns = 0;
      std::optional<std::size_t> prev_route;
      const bool eager = all_untimed_ || std::holds_alternative<IssueEager>(cfg_.issue);
      for (const auto& batch : batches_) {
        if (batch.inputs.empty())
          continue;
        const auto& machine = machines_[batch.route];
        auto state = machine.initial();
        if (prev_route && !eager) {
          // Let the previous route's reservation window close before switching.
          next_ns = last_issue_ns_ + net_.routes[*prev_route].length() * step_ns_;
        }
        for (const auto& payload : batch.inputs) {
          if (!eager && sched_.now().ns < next_ns) {
            co_await sched_.delay(next_ns - sched_.now().ns);
            // Stages finishing at this nanosecond read again one delta later;
            // arrive together with router traffic.
            co_await sched_.delay(0);
          }
          std::uint64_t planned = std::max(next_ns, sched_.now().ns);
          Txn t;
          t.id = injected_++;
          t.payload = payload;
          t.route = batch.route;
          t.step = 0;
          t.injected_at = sched_.now();
          issue_times_.push_back(sched_.now().ns);
          last_issue_ns_ = planned;
          std::uint64_t latency_ns = 1;
          if (std::holds_alternative<IssueGreedy>(cfg_.issue)) {
            std::size_t latency = machine.greedy_latency(state);
            state = machine.next(state, latency);
            latency_ns = latency * step_ns_;
          } else if (const auto* fixed = std::get_if<IssueFixed>(&cfg_.issue)) {
            latency_ns = fixed->interval;
          }
          next_ns = planned + latency_ns;
          const auto& dest = net_.entry.at(t.route);
          if (co_await dispatch(Netlist::entry_router, std::move(t), dest))
            ++issue_stalls_;
        }
        prev_route = batch.route;
      }
      issued_all_ = true;
    }

    template <class Timing>
    Process stage_loop(std::size_t i, Timing timing) {
      Chan& in = *stage_in_[i];
      Chan& out = *stage_out_[i];
      for (;;) {
        Txn t = co_await in.read();
        occupy(i, t);
        if constexpr (Timing::timed) {
          ++timed_waits_;
          stage_stats_[i].busy_ns += timing.delay_ns;
          if (timing.delay_ns > 0)
            co_await sched_.delay(timing.delay_ns);
        }
        t.advance();
        if (co_await write(out, std::move(t)))
          ++stage_stats_[i].output_stalls;
      }
    }

    void react(std::size_t i, const StageBehavior<Payload>& behavior) {
      while (auto t = stage_in_[i]->take()) {
        occupy(i, *t);
        if (!is_untimed(behavior.timing))
          ++timed_waits_;
        t->advance();
        stage_out_[i]->post(std::move(*t));
      }
    }

    Process stage_router(std::size_t i) {
      const std::size_t r = net_.router_of_stage(i);
      const RouterNode& router = net_.routers[r];
      for (;;) {
        Txn t = co_await router_in_[i]->read();
        if (dropped_.count(t.id))
          continue;
        if (t.step == 0)
          throw InvariantError(router.name + ": transaction " + std::to_string(t.id) + " was never advanced");
        const std::size_t completed = t.step - 1;
        const Destination* dest = router.tables.at(t.route).lookup(completed);
        if (!dest)
          throw RoutingError(router.name + ": no routing entry for pipeline \"" +
                             net_.route_names[t.route] + "\" step " + std::to_string(completed) +
                             " (transaction " + std::to_string(t.id) + ")");
        const Step& step = net_.routes[t.route].steps[completed];
        if (step.size() > 1 && (!dest->exit || cfg_.join)) {
          auto merged = collect(std::move(t), completed, router.name);
          if (!merged)
            continue;
          t = std::move(*merged);
        }
        if (dest->exit) {
          retire(std::move(t));
          continue;
        }
        co_await dispatch(r, std::move(t), *dest);
      }
    }

    // -- helpers -------------------------------------------------------------

    void occupy(std::size_t i, Txn& t) {
      const StageId& s = net_.stages[i].stage;
      const Route& route = net_.routes.at(t.route);
      if (t.step >= route.length() || !t.branch || *t.branch != s)
        throw InvariantError("stage " + s.name + " received transaction " + std::to_string(t.id) +
                             " addressed elsewhere");
      try {
        t.payload = cfg_.stages.at(s.name).apply(t.payload);
      } catch (const EvalError& e) {
        throw EvalError("stage " + s.name + ", transaction " + std::to_string(t.id) + ": " + e.what());
      }
      ++stage_stats_[i].items;
    }

    WriteAll<Txn> dispatch(std::size_t router, Txn t, const Destination& dest) {
      std::vector<std::pair<Chan*, Txn>> writes;
      for (const auto& s : dest.stages) {
        auto idx = net_.stage_index(s);
        if (!idx)
          throw RoutingError(net_.routers[router].name + ": stage " + s.name + " is not in the netlist");
        Chan*& port = ports_[router][*idx];
        if (!port) {
          // The netlist has no channel here; writes to it never complete.
          port = &make_channel(net_.routers[router].name + "->" + s.name + " (severed)",
                               stage_in_[*idx]->kind());
          port->disconnect();
        }
        Txn copy = t;
        copy.branch = s;
        writes.emplace_back(port, std::move(copy));
      }
      return WriteAll<Txn>(std::move(writes));
    }

    std::optional<Txn> collect(Txn t, std::size_t completed, const std::string& router) {
      const Step& step = net_.routes[t.route].steps[completed];
      auto pos = std::find(step.begin(), step.end(), *t.branch);
      if (pos == step.end())
        throw JoinError(router + ": transaction " + std::to_string(t.id) + " arrived from a stage outside fork step " +
                        std::to_string(completed));
      auto key = std::make_tuple(t.id, t.route, completed);
      auto& slots = joins_[key];
      slots.resize(step.size());
      auto& slot = slots[static_cast<std::size_t>(pos - step.begin())];
      if (slot)
        throw JoinError(router + ": second copy of transaction " + std::to_string(t.id) + " from " +
                        t.branch->name);
      slot = std::move(t);
      if (std::any_of(slots.begin(), slots.end(), [](const auto& s) { return !s; }))
        return std::nullopt;
      std::vector<Payload> payloads;
      for (const auto& s : slots)
        payloads.push_back(s->payload);
      Txn merged = *slots.front();
      merged.payload = cfg_.join(std::span<const Payload>(payloads));
      joins_.erase(key);
      return merged;
    }

    void retire(Txn t) {
      t.exited_at = sched_.now();
      exited_.insert(t.id);
      trace_.push_back(TraceRecord<Payload>{t.id, t.route, t.injected_at, t.exited_at, t.payload});
    }

    RunStats stats(const RunResult<Payload>& out) const {
      RunStats s;
      s.stages = stage_stats_;
      for (std::size_t i = 0; i < s.stages.size(); ++i) {
        s.stages[i].stalls = stage_in_[i]->stalls();
        s.stages[i].drops = stage_in_[i]->drops();
      }
      s.injected = injected_;
      s.completed = exited_.size();
      s.in_flight = out.in_flight_ids.size();
      s.dropped = dropped_.size();
      s.issue_stalls = issue_stalls_;
      for (const auto& ch : channels_) {
        s.total_stalls += ch->stalls();
        s.drops += ch->drops();
      }
      s.timed_waits = timed_waits_;
      s.final_time = sched_.now();
      std::vector<std::uint64_t> exits;
      std::set<std::uint64_t> seen;
      for (const auto& rec : out.trace)
        if (seen.insert(rec.id).second)
          exits.push_back(rec.exited_at.ns);
      if (exits.size() >= 2 && exits.back() > exits.front())
        s.throughput = static_cast<double>(exits.size() - 1) / static_cast<double>(exits.back() - exits.front());
      return s;
    }

    std::string deadlock_report(const RunResult<Payload>& out) const {
      std::ostringstream os;
      os << "deadlock at " << to_string(sched_.now()) << ": " << out.in_flight_ids.size()
         << " transaction(s) in flight [";
      for (std::size_t i = 0; i < out.in_flight_ids.size(); ++i)
        os << (i ? "," : "") << out.in_flight_ids[i];
      os << "]";
      if (!issued_all_)
        os << ", " << (total_inputs_ - injected_) << " input(s) not yet issued";
      os << "\nblocked processes:\n";
      for (const auto* p : sched_.processes()) {
        if (p->state == ProcessInfo::State::BlockedWrite)
          os << "  " << p->name << ": " << to_string(p->state) << " " << p->detail << "\n";
      }
      os << "idle processes:\n";
      for (const auto* p : sched_.processes()) {
        if (p->state != ProcessInfo::State::BlockedWrite && p->state != ProcessInfo::State::Finished)
          os << "  " << p->name << ": " << to_string(p->state) << " " << p->detail << "\n";
      }
      os << "channels:\n";
      for (const auto& ch : channels_) {
        auto writers = ch->waiting_writers();
        if (!ch->slot() && writers.empty())
          continue;
        os << "  " << ch->name() << " (" << pipekit::to_string(ch->kind()) << "): ";
        os << (ch->slot() ? "holds transaction " + std::to_string(ch->slot()->id) : std::string("empty"));
        if (!writers.empty()) {
          os << "; writes pending for transaction" << (writers.size() > 1 ? "s" : "");
          for (std::size_t w = 0; w < writers.size(); ++w)
            os << (w ? ", " : " ") << writers[w];
        }
        os << (ch->has_reader_waiting() ? "; reader waiting" : "; no reader waiting") << "\n";
      }
      for (const auto& [key, slots] : joins_) {
        os << "  join for transaction " << std::get<0>(key) << " at step " << std::get<2>(key)
           << ": waiting for";
        const Step& step = net_.routes[std::get<1>(key)].steps[std::get<2>(key)];
        for (std::size_t m = 0; m < slots.size(); ++m)
          if (!slots[m])
            os << " " << step[m].name;
        os << "\n";
      }
      return os.str();
    }

    const Netlist& net_;
    const EngineConfig<Payload>& cfg_;
    const std::vector<Batch<Payload>>& batches_;

    std::vector<ForbiddenLatencySet> forbidden_;
    std::vector<CollisionStates> machines_;
    bool all_untimed_ = false;
    std::uint64_t step_ns_ = 1;

    std::vector<std::unique_ptr<Chan>> channels_;
    std::vector<Chan*> stage_in_;
    std::vector<Chan*> stage_out_;
    std::vector<Chan*> router_in_;
    std::vector<std::map<std::size_t, Chan*>> ports_; // router -> stage index -> channel

    std::map<std::tuple<std::uint64_t, std::size_t, std::size_t>, std::vector<std::optional<Txn>>> joins_;
    std::set<std::uint64_t> exited_;
    std::set<std::uint64_t> dropped_;
    std::vector<TraceRecord<Payload>> trace_;
    std::vector<std::uint64_t> issue_times_;
    std::vector<StageStats> stage_stats_;
    std::uint64_t injected_ = 0;
    std::uint64_t total_inputs_ = 0;
    std::uint64_t last_issue_ns_ = 0;
    std::uint64_t timed_waits_ = 0;
    std::uint64_t issue_stalls_ = 0;
    bool issued_all_ = false;
    std::vector<std::string> warnings_;

    // Declared last: destroyed first, so no process frame outlives the
    // channels it references.
    Scheduler sched_;
  };

  Netlist net_;
  EngineConfig<Payload> cfg_;
};

} // namespace pipekit::kernel
