#pragma once

// Deterministic discrete-event scheduler. Simulated processes are C++20
// coroutines resumed from a single event queue ordered by
// (nanoseconds, delta, insertion sequence). Each (ns, delta) slot runs an
// evaluation phase followed by an update phase in which channels commit the
// writes requested during evaluation; committed values become visible to
// readers in the next delta.

#include <pipekit/error.hpp>

#include <compare>
#include <coroutine>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace pipekit::kernel {

struct SimTime {
  std::uint64_t ns = 0;
  std::uint64_t delta = 0;

  friend bool operator==(const SimTime&, const SimTime&) = default;
  friend auto operator<=>(const SimTime&, const SimTime&) = default;
};

inline std::string to_string(const SimTime& t) {
  return std::to_string(t.ns) + " ns (delta " + std::to_string(t.delta) + ")";
}

struct ProcessInfo {
  enum class State { Created, Running, BlockedRead, BlockedWrite, Waiting, Finished };

  std::string name;
  State state = State::Created;
  std::string detail; // channel or wait target while blocked
};

inline const char* to_string(ProcessInfo::State s) {
  switch (s) {
  case ProcessInfo::State::Created: return "created";
  case ProcessInfo::State::Running: return "running";
  case ProcessInfo::State::BlockedRead: return "blocked reading";
  case ProcessInfo::State::BlockedWrite: return "blocked writing";
  case ProcessInfo::State::Waiting: return "waiting";
  case ProcessInfo::State::Finished: return "finished";
  }
  return "?";
}

/// Coroutine type of a simulated process. Processes start suspended and are
/// launched by the scheduler in creation order.
class Process {
public:
  struct promise_type {
    ProcessInfo* info = nullptr;
    std::exception_ptr error;

    Process get_return_object() { return Process{Handle::from_promise(*this)}; }
    std::suspend_always initial_suspend() noexcept { return {}; }
    std::suspend_always final_suspend() noexcept { return {}; }
    void return_void() noexcept {}
    void unhandled_exception() noexcept { error = std::current_exception(); }
  };
  using Handle = std::coroutine_handle<promise_type>;

  Process() = default;
  Process(Process&& o) noexcept : h_(std::exchange(o.h_, {})) {}
  Process& operator=(Process&& o) noexcept {
    if (this != &o) {
      reset();
      h_ = std::exchange(o.h_, {});
    }
    return *this;
  }
  Process(const Process&) = delete;
  Process& operator=(const Process&) = delete;
  ~Process() { reset(); }

  Handle handle() const noexcept { return h_; }

private:
  explicit Process(Handle h) : h_(h) {}
  void reset() {
    if (h_)
      h_.destroy();
    h_ = {};
  }
  Handle h_;
};

/// Something that commits state in the update phase of a delta cycle.
class Updatable {
public:
  virtual ~Updatable() = default;
  virtual void update() = 0;

private:
  friend class Scheduler;
  bool queued_ = false;
};

class Scheduler {
public:
  enum class Outcome { Idle, Horizon };

  Scheduler() = default;
  Scheduler(const Scheduler&) = delete;
  Scheduler& operator=(const Scheduler&) = delete;

  SimTime now() const noexcept { return now_; }
  SimTime next_delta() const noexcept { return {now_.ns, now_.delta + 1}; }

  ProcessInfo& spawn(std::string name, Process p) {
    auto rec = std::make_unique<Record>();
    rec->info.name = std::move(name);
    rec->process = std::move(p);
    rec->process.handle().promise().info = &rec->info;
    records_.push_back(std::move(rec));
    return records_.back()->info;
  }

  /// Registers a non-process activity (a reactive callback) for diagnostics.
  ProcessInfo& describe(std::string name) {
    auto rec = std::make_unique<Record>();
    rec->info.name = std::move(name);
    rec->info.state = ProcessInfo::State::Waiting;
    records_.push_back(std::move(rec));
    return records_.back()->info;
  }

  void wake(Process::Handle h, SimTime at) { push(Event{at, seq_++, h, {}}); }
  void call(std::function<void()> fn, SimTime at) { push(Event{at, seq_++, {}, std::move(fn)}); }

  void request_update(Updatable& u) {
    if (!u.queued_) {
      u.queued_ = true;
      updates_.push_back(&u);
    }
  }

  /// Suspends the calling process for `ns` nanoseconds; resumes at delta 0.
  auto delay(std::uint64_t ns) {
    struct Awaiter {
      Scheduler& sched;
      std::uint64_t ns;
      bool await_ready() const noexcept { return false; }
      void await_suspend(Process::Handle h) {
        auto* info = h.promise().info;
        info->state = ProcessInfo::State::Waiting;
        info->detail = "until " + std::to_string(sched.now_.ns + ns) + " ns";
        SimTime at = ns == 0 ? sched.next_delta() : SimTime{sched.now_.ns + ns, 0};
        sched.wake(h, at);
      }
      void await_resume() const noexcept {}
    };
    return Awaiter{*this, ns};
  }

  /// Runs until no events remain or the next event lies beyond the horizon.
  Outcome run(std::optional<std::uint64_t> horizon_ns = std::nullopt) {
    if (!started_) {
      for (auto& r : records_)
        if (r->process.handle())
          wake(r->process.handle(), {0, 0});
      started_ = true;
    }
    while (!queue_.empty()) {
      SimTime t = queue_.top().at;
      if (horizon_ns && t.ns > *horizon_ns)
        return Outcome::Horizon;
      if (t < now_)
        throw InvariantError("event scheduled in the past");
      now_ = t;
      while (!queue_.empty() && queue_.top().at == t) {
        Event e = queue_.top();
        queue_.pop();
        if (e.handle) {
          auto* info = e.handle.promise().info;
          info->state = ProcessInfo::State::Running;
          info->detail.clear();
          e.handle.resume();
          if (e.handle.promise().error)
            std::rethrow_exception(e.handle.promise().error);
          if (e.handle.done())
            info->state = ProcessInfo::State::Finished;
        } else {
          e.fn();
        }
      }
      auto pending = std::exchange(updates_, {});
      for (auto* u : pending) {
        u->queued_ = false;
        u->update();
      }
    }
    return Outcome::Idle;
  }

  std::vector<const ProcessInfo*> processes() const {
    std::vector<const ProcessInfo*> out;
    for (const auto& r : records_)
      out.push_back(&r->info);
    return out;
  }

private:
  struct Event {
    SimTime at;
    std::uint64_t seq;
    Process::Handle handle;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return std::tie(a.at, a.seq) > std::tie(b.at, b.seq);
    }
  };
  struct Record {
    ProcessInfo info;
    Process process;
  };

  void push(Event e) {
    if (started_ && e.at <= now_)
      throw InvariantError("event must be scheduled after the current time");
    queue_.push(std::move(e));
  }

  SimTime now_{};
  std::uint64_t seq_ = 0;
  bool started_ = false;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::vector<Updatable*> updates_;
  std::vector<std::unique_ptr<Record>> records_;
};

} // namespace pipekit::kernel
