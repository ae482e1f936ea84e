#pragma once

// Single-slot channels between simulated processes.
//
// Blocking: a write is a request committed in the update phase. When the
// slot is free the arbitration winner is admitted and its writer resumes in
// the next delta; every other request stays suspended. A request counts one
// stall if it cannot be handed straight to a waiting reader, either because
// it stays pending or because it is parked in the slot while the reader is
// busy. A read suspends while the slot is empty.
//
// Signal: writes never suspend. Committing over an unread value drops it.

#include <pipekit/kernel/scheduler.hpp>
#include <pipekit/policy.hpp>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace pipekit::kernel {

template <class T>
concept Identified = requires(const T& t) {
  { t.id } -> std::convertible_to<std::uint64_t>;
};

/// Shared by the requests of one multi-channel write; the writer resumes once
/// every request has been admitted.
struct WriteGroup {
  Process::Handle writer;
  std::size_t remaining = 0;
  bool stalled = false; // some request counted a stall
};

template <Identified T>
class Channel final : public Updatable {
public:
  Channel(Scheduler& sched, std::string name, ChannelKind kind,
          ArbitrationSpec arbitration = ArbitrationSpec::ArrivalOrder)
      : sched_(sched), name_(std::move(name)), kind_(kind), arbitration_(arbitration) {}

  Channel(const Channel&) = delete;
  Channel& operator=(const Channel&) = delete;

  const std::string& name() const noexcept { return name_; }
  ChannelKind kind() const noexcept { return kind_; }

  auto read() {
    struct Awaiter {
      Channel& ch;
      bool await_ready() const noexcept { return ch.slot_.has_value(); }
      void await_suspend(Process::Handle h) {
        ch.reader_ = h;
        auto* info = h.promise().info;
        info->state = ProcessInfo::State::BlockedRead;
        info->detail = ch.name_;
      }
      T await_resume() { return *ch.take(); }
    };
    return Awaiter{*this};
  }

  /// Takes the slot value if present; used by reactive callbacks.
  std::optional<T> take() {
    if (!slot_)
      return std::nullopt;
    std::optional<T> v = std::move(slot_);
    slot_.reset();
    ++reads_;
    if (!pending_.empty())
      sched_.request_update(*this);
    return v;
  }

  /// Non-suspending write. Blocking channels still arbitrate the request;
  /// signal channels overwrite.
  void post(T value) { request(std::move(value), nullptr); }

  /// Queues a request that resumes `group->writer` once admitted. Returns
  /// true if the request has to wait for an update phase.
  bool request(T value, WriteGroup* group) {
    if (kind_ == ChannelKind::OverwriteSignal)
      group = nullptr;
    pending_.push_back(Request{std::move(value), group, sched_.now().ns, seq_++, false});
    sched_.request_update(*this);
    return group != nullptr;
  }

  /// Calls `fn` in the delta after a value lands in an empty-reader slot.
  void on_ready(std::function<void()> fn) { on_ready_ = std::move(fn); }

  /// Invoked with every value lost to an overwrite.
  void on_drop(std::function<void(const T&)> fn) { on_drop_ = std::move(fn); }

  /// A disconnected channel never commits a write: blocking writers wait
  /// forever and signal values are dropped.
  void disconnect() { connected_ = false; }
  bool connected() const noexcept { return connected_; }

  void update() override {
    if (!connected_ && kind_ == ChannelKind::OverwriteSignal) {
      for (auto& r : pending_) {
        ++drops_;
        if (on_drop_)
          on_drop_(r.value);
      }
      pending_.clear();
    } else if (kind_ == ChannelKind::OverwriteSignal) {
      std::stable_sort(pending_.begin(), pending_.end(),
                       [&](const Request& a, const Request& b) { return wins(a, b); });
      for (auto& r : pending_) {
        if (slot_) {
          ++drops_;
          if (on_drop_)
            on_drop_(*slot_);
        }
        slot_ = std::move(r.value);
        ++admitted_;
      }
      pending_.clear();
    } else if (connected_ && !slot_ && !pending_.empty()) {
      auto it = std::min_element(pending_.begin(), pending_.end(),
                                 [&](const Request& a, const Request& b) { return wins(a, b); });
      Request r = std::move(*it);
      pending_.erase(it);
      slot_ = std::move(r.value);
      ++admitted_;
      if (!reader_ && !r.stalled)
        count_stall(r); // lands in the slot while the consumer is busy
      if (r.group && --r.group->remaining == 0)
        sched_.wake(r.group->writer, sched_.next_delta());
    }
    for (auto& r : pending_) {
      if (!r.stalled)
        count_stall(r);
    }
    if (slot_) {
      if (reader_) {
        sched_.wake(std::exchange(reader_, {}), sched_.next_delta());
      } else if (on_ready_ && !callback_scheduled_) {
        callback_scheduled_ = true;
        sched_.call(
            [this] {
              callback_scheduled_ = false;
              on_ready_();
            },
            sched_.next_delta());
      }
    }
  }

  bool has_reader_waiting() const noexcept { return static_cast<bool>(reader_); }
  const std::optional<T>& slot() const noexcept { return slot_; }
  std::vector<std::uint64_t> waiting_writers() const {
    std::vector<std::uint64_t> ids;
    for (const auto& r : pending_)
      ids.push_back(r.value.id);
    return ids;
  }

  std::uint64_t stalls() const noexcept { return stalls_; }
  std::uint64_t drops() const noexcept { return drops_; }
  std::uint64_t admitted() const noexcept { return admitted_; }
  std::uint64_t reads() const noexcept { return reads_; }

private:
  struct Request {
    T value;
    WriteGroup* group;
    std::uint64_t arrival_ns;
    std::uint64_t seq;
    bool stalled;
  };

  void count_stall(Request& r) {
    r.stalled = true;
    ++stalls_;
    if (r.group)
      r.group->stalled = true;
  }

  bool wins(const Request& a, const Request& b) const {
    std::uint64_t ida = a.value.id, idb = b.value.id;
    if (arbitration_ == ArbitrationSpec::OldestFirst)
      return std::tie(ida, a.arrival_ns, a.seq) < std::tie(idb, b.arrival_ns, b.seq);
    return std::tie(a.arrival_ns, ida, a.seq) < std::tie(b.arrival_ns, idb, b.seq);
  }

  Scheduler& sched_;
  std::string name_;
  ChannelKind kind_;
  ArbitrationSpec arbitration_;
  std::optional<T> slot_;
  std::vector<Request> pending_;
  Process::Handle reader_;
  std::function<void()> on_ready_;
  std::function<void(const T&)> on_drop_;
  bool callback_scheduled_ = false;
  bool connected_ = true;
  std::uint64_t seq_ = 0;
  std::uint64_t stalls_ = 0;
  std::uint64_t drops_ = 0;
  std::uint64_t admitted_ = 0;
  std::uint64_t reads_ = 0;
};

/// Writes one value to each listed channel in the same delta and suspends
/// until every blocking request has been admitted.
template <Identified T>
class WriteAll {
public:
  explicit WriteAll(std::vector<std::pair<Channel<T>*, T>> writes) : writes_(std::move(writes)) {}

  bool await_ready() const noexcept { return writes_.empty(); }

  bool await_suspend(Process::Handle h) {
    group_.writer = h;
    std::string targets;
    for (auto& [ch, value] : writes_) {
      if (ch->kind() == ChannelKind::BlockingSingleSlot)
        ++group_.remaining;
      targets += (targets.empty() ? "" : ", ") + ch->name();
    }
    const std::size_t blocking = group_.remaining;
    for (auto& [ch, value] : writes_)
      ch->request(std::move(value), &group_);
    if (blocking == 0)
      return false;
    auto* info = h.promise().info;
    info->state = ProcessInfo::State::BlockedWrite;
    info->detail = targets;
    return true;
  }

  /// True if any of the writes stalled.
  bool await_resume() const noexcept { return group_.stalled; }

private:
  std::vector<std::pair<Channel<T>*, T>> writes_;
  WriteGroup group_;
};

template <Identified T> WriteAll<T> write(Channel<T>& ch, T value) {
  std::vector<std::pair<Channel<T>*, T>> w;
  w.emplace_back(&ch, std::move(value));
  return WriteAll<T>(std::move(w));
}

} // namespace pipekit::kernel
