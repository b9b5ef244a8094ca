#pragma once

// Single-threaded cooperative event loop used by every moving part of the
// system. Tasks are C++20 coroutines; time is either virtual (the loop jumps
// straight to the next event) or real (the loop sleeps until the event's
// wall-clock deadline). Determinism in virtual mode comes from one rule:
// every wakeup goes through the kernel's (time, sequence) heap, never an
// inline resume, so identical seeds replay identically.

#include <algorithm>
#include <chrono>
#include <coroutine>
#include <cstdint>
#include <deque>
#include <exception>
#include <optional>
#include <queue>
#include <string>
#include <thread>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "svs/errors.hpp"
#include "svs/time.hpp"

namespace svs {

enum class ClockMode { Virtual, Real };

inline ClockMode clock_mode_from_string(const std::string& s) {
    if (s == "virtual") return ClockMode::Virtual;
    if (s == "real") return ClockMode::Real;
    throw ParseError("unknown clock_mode '" + s + "' (expected 'virtual' or 'real')");
}

inline const char* to_string(ClockMode m) {
    return m == ClockMode::Virtual ? "virtual" : "real";
}

namespace detail {

template <typename T>
struct TaskPromise;

}  // namespace detail

// Lazy coroutine task. Awaiting it starts the child and resumes the awaiter
// synchronously when the child completes (symmetric transfer); only timed or
// blocking waits go through the kernel heap.
template <typename T>
class [[nodiscard]] SimTask {
  public:
    using promise_type = detail::TaskPromise<T>;

    SimTask() = default;
    explicit SimTask(std::coroutine_handle<promise_type> h) : handle_(h) {}
    SimTask(SimTask&& o) noexcept : handle_(std::exchange(o.handle_, {})) {}
    SimTask& operator=(SimTask&& o) noexcept {
        if (this != &o) {
            if (handle_) handle_.destroy();
            handle_ = std::exchange(o.handle_, {});
        }
        return *this;
    }
    SimTask(const SimTask&) = delete;
    SimTask& operator=(const SimTask&) = delete;
    ~SimTask() {
        if (handle_) handle_.destroy();
    }

    bool valid() const { return static_cast<bool>(handle_); }

    auto operator co_await() && noexcept {
        struct Awaiter {
            std::coroutine_handle<promise_type> child;
            bool await_ready() const noexcept { return false; }
            std::coroutine_handle<> await_suspend(std::coroutine_handle<> parent) noexcept {
                child.promise().continuation = parent;
                return child;
            }
            T await_resume() { return child.promise().take(); }
        };
        return Awaiter{handle_};
    }

  private:
    std::coroutine_handle<promise_type> handle_;
};

namespace detail {

struct FinalContinuation {
    bool await_ready() const noexcept { return false; }
    template <typename P>
    std::coroutine_handle<> await_suspend(std::coroutine_handle<P> self) noexcept {
        auto cont = self.promise().continuation;
        return cont ? cont : std::noop_coroutine();
    }
    void await_resume() const noexcept {}
};

template <typename T>
struct TaskPromise {
    std::coroutine_handle<> continuation;
    std::variant<std::monostate, T, std::exception_ptr> result;

    SimTask<T> get_return_object() {
        return SimTask<T>(std::coroutine_handle<TaskPromise>::from_promise(*this));
    }
    std::suspend_always initial_suspend() noexcept { return {}; }
    FinalContinuation final_suspend() noexcept { return {}; }
    void return_value(T v) { result.template emplace<1>(std::move(v)); }
    void unhandled_exception() { result.template emplace<2>(std::current_exception()); }
    T take() {
        if (result.index() == 2) std::rethrow_exception(std::get<2>(result));
        return std::move(std::get<1>(result));
    }
};

template <>
struct TaskPromise<void> {
    std::coroutine_handle<> continuation;
    std::exception_ptr error;

    SimTask<void> get_return_object() {
        return SimTask<void>(std::coroutine_handle<TaskPromise>::from_promise(*this));
    }
    std::suspend_always initial_suspend() noexcept { return {}; }
    FinalContinuation final_suspend() noexcept { return {}; }
    void return_void() {}
    void unhandled_exception() { error = std::current_exception(); }
    void take() {
        if (error) std::rethrow_exception(error);
    }
};

}  // namespace detail

// The event loop. Owns the pending-event heap and the root frames of all
// spawned tasks; run() drives everything to completion.
class SimKernel {
  public:
    explicit SimKernel(ClockMode mode = ClockMode::Virtual)
        : mode_(mode), epoch_(std::chrono::steady_clock::now()) {}

    SimKernel(const SimKernel&) = delete;
    SimKernel& operator=(const SimKernel&) = delete;

    ~SimKernel() {
        // Destroying a root frame frees its whole in-flight call chain (child
        // frames are owned by SimTask members inside parent frames), so heap
        // entries — which point into those chains — must not be destroyed a
        // second time here.
        for (void* p : roots_) std::coroutine_handle<>::from_address(p).destroy();
    }

    ClockMode mode() const { return mode_; }

    TimeNs now() const {
        if (mode_ == ClockMode::Virtual) return now_;
        return std::chrono::duration_cast<std::chrono::nanoseconds>(
                   std::chrono::steady_clock::now() - epoch_)
            .count();
    }

    void schedule_at(TimeNs t, std::coroutine_handle<> h) {
        heap_.push(Event{t, next_seq_++, h});
    }

    // Awaitable: resume once the clock reaches `t`.
    auto sleep_until(TimeNs t) {
        struct Awaiter {
            SimKernel* k;
            TimeNs t;
            bool await_ready() const noexcept { return false; }
            void await_suspend(std::coroutine_handle<> h) {
                k->schedule_at(std::max(t, k->now()), h);
            }
            void await_resume() const noexcept {}
        };
        return Awaiter{this, t};
    }

    auto sleep_for(TimeNs d) { return sleep_until(now() + (d > 0 ? d : 0)); }

    // Reschedule through the heap without advancing time; lets any other
    // task ready at the same instant run first.
    auto yield_now() { return sleep_for(0); }

    // Start a root task. It begins executing from the event loop, not
    // inline, so spawn order and run order stay decoupled.
    void spawn(SimTask<void> task) {
        ++active_roots_;
        auto root = root_body(std::move(task));
        root.handle.promise().kernel = this;
        roots_.insert(root.handle.address());
        schedule_at(now(), root.handle);
    }

    std::size_t active_roots() const { return active_roots_; }

    // Drive until every root task has finished. Throws the first unhandled
    // task exception, or reports a deadlock if tasks remain but no event is
    // pending.
    void run() {
        while (!heap_.empty()) {
            Event ev = heap_.top();
            heap_.pop();
            if (mode_ == ClockMode::Virtual) {
                if (ev.t > now_) now_ = ev.t;
            } else {
                const auto deadline = epoch_ + std::chrono::nanoseconds(ev.t);
                if (deadline > std::chrono::steady_clock::now())
                    std::this_thread::sleep_until(deadline);
            }
            ev.handle.resume();
            if (error_) {
                auto err = std::exchange(error_, nullptr);
                std::rethrow_exception(err);
            }
        }
        if (active_roots_ > 0) {
            throw RuntimeError("event loop deadlock: " + std::to_string(active_roots_) +
                               " task(s) blocked with no pending events");
        }
    }

  private:
    struct Event {
        TimeNs t;
        std::uint64_t seq;
        std::coroutine_handle<> handle;
        bool operator>(const Event& o) const { return t != o.t ? t > o.t : seq > o.seq; }
    };

    struct RootTask {
        struct promise_type {
            SimKernel* kernel = nullptr;

            RootTask get_return_object() {
                return RootTask{std::coroutine_handle<promise_type>::from_promise(*this)};
            }
            std::suspend_always initial_suspend() noexcept { return {}; }
            auto final_suspend() noexcept {
                struct SelfDestroy {
                    bool await_ready() const noexcept { return false; }
                    void await_suspend(std::coroutine_handle<promise_type> self) noexcept {
                        SimKernel* k = self.promise().kernel;
                        k->roots_.erase(self.address());
                        --k->active_roots_;
                        self.destroy();
                    }
                    void await_resume() const noexcept {}
                };
                return SelfDestroy{};
            }
            void return_void() {}
            void unhandled_exception() {
                if (!kernel->error_) kernel->error_ = std::current_exception();
            }
        };
        std::coroutine_handle<promise_type> handle;
    };

    static RootTask root_body(SimTask<void> task) { co_await std::move(task); }

    ClockMode mode_;
    TimeNs now_ = 0;
    std::chrono::steady_clock::time_point epoch_;
    std::uint64_t next_seq_ = 0;
    std::priority_queue<Event, std::vector<Event>, std::greater<>> heap_;
    std::unordered_set<void*> roots_;
    std::size_t active_roots_ = 0;
    std::exception_ptr error_;
};

// Thrown by BoundedQueue::push when the queue is closed under the producer.
class QueueClosed : public RuntimeError {
  public:
    QueueClosed() : RuntimeError("queue closed") {}
};

// Fixed-capacity FIFO connecting pipeline stages. push blocks when full,
// pop blocks when empty; close() fails blocked producers and lets consumers
// drain whatever remains before seeing end-of-stream. Wakeups are scheduled
// through the kernel so ordering stays deterministic, and the fast paths
// are taken only when nobody is parked — a newcomer must not jump the line.
template <typename T>
class BoundedQueue {
    struct PushNode {
        T value;
        std::coroutine_handle<> handle{};
        bool closed_out = false;
    };
    struct PopNode {
        std::optional<T> result;
        std::coroutine_handle<> handle{};
    };

  public:
    BoundedQueue(SimKernel& k, std::size_t capacity) : k_(&k), cap_(capacity ? capacity : 1) {}

    BoundedQueue(const BoundedQueue&) = delete;
    BoundedQueue& operator=(const BoundedQueue&) = delete;

    auto push(T value) {
        struct Awaiter {
            BoundedQueue* q;
            PushNode node;
            bool waited = false;

            bool await_ready() {
                if (q->closed_) throw QueueClosed();
                if (!q->pop_waiters_.empty()) {
                    // Queue is empty with a consumer parked: hand the item
                    // straight to the longest-waiting consumer.
                    PopNode* w = q->pop_waiters_.front();
                    q->pop_waiters_.pop_front();
                    w->result.emplace(std::move(node.value));
                    q->wake(w->handle);
                    return true;
                }
                if (q->push_waiters_.empty() && q->items_.size() < q->cap_) {
                    q->items_.push_back(std::move(node.value));
                    q->note_depth();
                    return true;
                }
                return false;
            }
            void await_suspend(std::coroutine_handle<> h) {
                waited = true;
                node.handle = h;
                q->push_waiters_.push_back(&node);
            }
            void await_resume() {
                if (waited && node.closed_out) throw QueueClosed();
            }
        };
        return Awaiter{this, PushNode{std::move(value)}};
    }

    auto pop() {
        struct Awaiter {
            BoundedQueue* q;
            PopNode node;

            bool await_ready() {
                if (!q->items_.empty()) {
                    node.result.emplace(std::move(q->items_.front()));
                    q->items_.pop_front();
                    q->admit_pusher();
                    return true;
                }
                return q->closed_;  // drained: resume with nullopt
            }
            void await_suspend(std::coroutine_handle<> h) {
                node.handle = h;
                q->pop_waiters_.push_back(&node);
            }
            std::optional<T> await_resume() { return std::move(node.result); }
        };
        return Awaiter{this, PopNode{}};
    }

    void close() {
        if (closed_) return;
        closed_ = true;
        for (PushNode* w : push_waiters_) {
            w->closed_out = true;
            wake(w->handle);
        }
        push_waiters_.clear();
        for (PopNode* w : pop_waiters_) wake(w->handle);
        pop_waiters_.clear();
    }

    bool closed() const { return closed_; }
    std::size_t size() const { return items_.size(); }
    std::size_t high_water() const { return high_water_; }

  private:
    void wake(std::coroutine_handle<> h) { k_->schedule_at(k_->now(), h); }

    void note_depth() { high_water_ = std::max(high_water_, items_.size()); }

    // A slot freed: move the longest-waiting producer's item in.
    void admit_pusher() {
        if (push_waiters_.empty() || items_.size() >= cap_) return;
        PushNode* w = push_waiters_.front();
        push_waiters_.pop_front();
        items_.push_back(std::move(w->value));
        note_depth();
        wake(w->handle);
    }

    SimKernel* k_;
    std::size_t cap_;
    std::deque<T> items_;
    std::deque<PushNode*> push_waiters_;
    std::deque<PopNode*> pop_waiters_;
    bool closed_ = false;
    std::size_t high_water_ = 0;
};

// Counting semaphore for shared accelerator slots. Strict FIFO: release()
// hands tokens to the head waiter before anyone else can take them, so a
// cheap request arriving late cannot starve an expensive one.
class TokenPool {
    struct WaitNode {
        int need;
        std::coroutine_handle<> handle{};
    };

  public:
    TokenPool(SimKernel& k, int tokens) : k_(&k), available_(tokens) {}

    TokenPool(const TokenPool&) = delete;
    TokenPool& operator=(const TokenPool&) = delete;

    auto acquire(int n = 1) {
        struct Awaiter {
            TokenPool* p;
            WaitNode node;

            bool await_ready() {
                if (p->waiters_.empty() && p->available_ >= node.need) {
                    p->available_ -= node.need;
                    return true;
                }
                return false;
            }
            void await_suspend(std::coroutine_handle<> h) {
                node.handle = h;
                p->waiters_.push_back(&node);
            }
            void await_resume() const noexcept {}
        };
        return Awaiter{this, WaitNode{n}};
    }

    void release(int n = 1) {
        available_ += n;
        while (!waiters_.empty() && available_ >= waiters_.front()->need) {
            WaitNode* w = waiters_.front();
            waiters_.pop_front();
            available_ -= w->need;  // reserved for w; nobody can steal it
            k_->schedule_at(k_->now(), w->handle);
        }
    }

    int available() const { return available_; }
    std::size_t waiting() const { return waiters_.size(); }

  private:
    SimKernel* k_;
    int available_;
    std::deque<WaitNode*> waiters_;
};

}  // namespace svs
