#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "svs/sim.hpp"
#include "svs/time.hpp"

using svs::BoundedQueue;
using svs::ClockMode;
using svs::SimKernel;
using svs::SimTask;
using svs::TimeNs;
using svs::TokenPool;

namespace {

SimTask<void> log_at(SimKernel& k, TimeNs t, std::vector<std::string>& log, std::string tag) {
    co_await k.sleep_until(t);
    log.push_back(tag + "@" + std::to_string(k.now()));
}

}  // namespace

TEST_CASE("virtual time jumps between events and starts at zero") {
    SimKernel k(ClockMode::Virtual);
    std::vector<std::string> log;
    CHECK(k.now() == 0);
    k.spawn(log_at(k, svs::sec_to_ns(5.0), log, "a"));
    k.spawn(log_at(k, svs::sec_to_ns(2.0), log, "b"));
    k.run();
    REQUIRE(log.size() == 2);
    CHECK(log[0] == "b@2000000000");
    CHECK(log[1] == "a@5000000000");
}

TEST_CASE("same-deadline events fire in scheduling order") {
    SimKernel k(ClockMode::Virtual);
    std::vector<std::string> log;
    for (int i = 0; i < 6; ++i) {
        k.spawn(log_at(k, 1000, log, "t" + std::to_string(i)));
    }
    k.run();
    REQUIRE(log.size() == 6);
    for (int i = 0; i < 6; ++i) CHECK(log[i] == "t" + std::to_string(i) + "@1000");
}

TEST_CASE("sleeping into the past resumes immediately at the current time") {
    SimKernel k(ClockMode::Virtual);
    std::vector<TimeNs> seen;
    k.spawn([](SimKernel& k, std::vector<TimeNs>& seen) -> SimTask<void> {
        co_await k.sleep_until(1000);
        co_await k.sleep_until(200);  // already past; must not rewind
        seen.push_back(k.now());
    }(k, seen));
    k.run();
    REQUIRE(seen.size() == 1);
    CHECK(seen[0] == 1000);
}

TEST_CASE("two identical virtual runs produce identical traces") {
    auto trace = []() {
        SimKernel k(ClockMode::Virtual);
        std::vector<std::string> log;
        for (int i = 0; i < 50; ++i) {
            k.spawn([](SimKernel& k, std::vector<std::string>& log, int i) -> SimTask<void> {
                for (int r = 0; r < 5; ++r) {
                    co_await k.sleep_for((i * 7 + r * 13) % 29 + 1);
                    log.push_back(std::to_string(i) + ":" + std::to_string(r) + "@" +
                                  std::to_string(k.now()));
                }
            }(k, log, i));
        }
        k.run();
        return log;
    };
    CHECK(trace() == trace());
}

TEST_CASE("real clock advances roughly with wall time") {
    SimKernel k(ClockMode::Real);
    TimeNs before = k.now();
    k.spawn([](SimKernel& k) -> SimTask<void> { co_await k.sleep_for(svs::ms_to_ns(30)); }(k));
    k.run();
    TimeNs after = k.now();
    CHECK(after - before >= svs::ms_to_ns(25));
    CHECK(after - before < svs::sec_to_ns(5.0));
}

// ---------------------------------------------------------------------------
// BoundedQueue
// ---------------------------------------------------------------------------

TEST_CASE("bounded queue preserves FIFO order and reports its high-water mark") {
    SimKernel k(ClockMode::Virtual);
    auto q = std::make_unique<BoundedQueue<int>>(k, 2);
    std::vector<int> got;

    k.spawn([](SimKernel& k, BoundedQueue<int>& q) -> SimTask<void> {
        for (int i = 0; i < 5; ++i) co_await q.push(i);
        q.close();
        (void)k;
    }(k, *q));
    k.spawn([](SimKernel& k, BoundedQueue<int>& q, std::vector<int>& got) -> SimTask<void> {
        while (true) {
            co_await k.sleep_for(10);  // let the producer saturate the queue
            auto v = co_await q.pop();
            if (!v) break;
            got.push_back(*v);
        }
    }(k, *q, got));
    k.run();

    CHECK(got == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(q->high_water() == 2);
}

TEST_CASE("closing a queue drains remaining items then signals end of stream") {
    SimKernel k(ClockMode::Virtual);
    auto q = std::make_unique<BoundedQueue<int>>(k, 4);
    std::vector<int> got;
    bool saw_end = false;

    k.spawn([](SimKernel&, BoundedQueue<int>& q) -> SimTask<void> {
        co_await q.push(1);
        co_await q.push(2);
        q.close();
    }(k, *q));
    k.spawn([](SimKernel& k, BoundedQueue<int>& q, std::vector<int>& got,
               bool& saw_end) -> SimTask<void> {
        co_await k.sleep_for(100);
        while (auto v = co_await q.pop()) got.push_back(*v);
        saw_end = true;
    }(k, *q, got, saw_end));
    k.run();

    CHECK(got == std::vector<int>{1, 2});
    CHECK(saw_end);
}

TEST_CASE("pushing into a closed queue fails, including for parked producers") {
    SimKernel k(ClockMode::Virtual);
    auto q = std::make_unique<BoundedQueue<int>>(k, 1);
    bool blocked_producer_failed = false;
    bool late_producer_failed = false;

    k.spawn([](SimKernel&, BoundedQueue<int>& q, bool& failed) -> SimTask<void> {
        co_await q.push(1);  // fills the queue
        try {
            co_await q.push(2);  // parks, then close() fails it
        } catch (const svs::QueueClosed&) {
            failed = true;
        }
    }(k, *q, blocked_producer_failed));
    k.spawn([](SimKernel& k, BoundedQueue<int>& q, bool& failed) -> SimTask<void> {
        co_await k.sleep_for(50);
        q.close();
        try {
            co_await q.push(3);
        } catch (const svs::QueueClosed&) {
            failed = true;
        }
    }(k, *q, late_producer_failed));
    k.run();

    CHECK(blocked_producer_failed);
    CHECK(late_producer_failed);
}

// ---------------------------------------------------------------------------
// TokenPool
// ---------------------------------------------------------------------------

TEST_CASE("token pool is strictly FIFO: a small late request cannot jump the queue") {
    SimKernel k(ClockMode::Virtual);
    auto pool = std::make_unique<TokenPool>(k, 4);
    std::vector<std::string> starts;

    auto worker = [](SimKernel& k, TokenPool& pool, std::vector<std::string>& starts,
                     std::string tag, TimeNs arrive, int need, TimeNs hold) -> SimTask<void> {
        co_await k.sleep_until(arrive);
        co_await pool.acquire(need);
        starts.push_back(tag + "@" + std::to_string(k.now()));
        co_await k.sleep_for(hold);
        pool.release(need);
    };

    // t0 holds 2 tokens until t=10. The need-3 request at t=1 must start
    // before the need-1 request from t=2 even though 2 tokens idle all along.
    k.spawn(worker(k, *pool, starts, "hold2", 0, 2, 10));
    k.spawn(worker(k, *pool, starts, "need3", 1, 3, 5));
    k.spawn(worker(k, *pool, starts, "need1", 2, 1, 5));
    k.run();

    REQUIRE(starts.size() == 3);
    CHECK(starts[0] == "hold2@0");
    CHECK(starts[1] == "need3@10");
    CHECK(starts[2] == "need1@10");
    CHECK(pool->available() == 4);
}

TEST_CASE("eight periodic requesters on four tokens match a hand-rolled queue model") {
    // Oracle: serve acquire requests in arrival order; each takes the
    // earliest-free slot, starting no earlier than its arrival.
    constexpr int kCameras = 8;
    constexpr int kCycles = 12;
    constexpr TimeNs kPeriod = svs::sec_to_ns(1.0);
    constexpr TimeNs kHold = svs::ms_to_ns(700);

    struct Req {
        TimeNs arrival;
        int cam;
        int cycle;
    };
    std::vector<Req> reqs;
    for (int cyc = 0; cyc < kCycles; ++cyc)
        for (int cam = 0; cam < kCameras; ++cam)
            reqs.push_back({cyc * kPeriod + cam * svs::kNsPerMs, cam, cyc});
    std::sort(reqs.begin(), reqs.end(),
              [](const Req& a, const Req& b) { return a.arrival < b.arrival; });

    std::map<std::pair<int, int>, TimeNs> expected;
    std::priority_queue<TimeNs, std::vector<TimeNs>, std::greater<>> slots;
    for (int i = 0; i < 4; ++i) slots.push(0);
    for (const Req& r : reqs) {
        TimeNs free_at = slots.top();
        slots.pop();
        TimeNs start = std::max(r.arrival, free_at);
        expected[{r.cam, r.cycle}] = start;
        slots.push(start + kHold);
    }

    SimKernel k(ClockMode::Virtual);
    auto pool = std::make_unique<TokenPool>(k, 4);
    std::map<std::pair<int, int>, TimeNs> actual;
    for (int cam = 0; cam < kCameras; ++cam) {
        k.spawn([](SimKernel& k, TokenPool& pool, std::map<std::pair<int, int>, TimeNs>& actual,
                   int cam) -> SimTask<void> {
            for (int cyc = 0; cyc < kCycles; ++cyc) {
                co_await k.sleep_until(cyc * kPeriod + cam * svs::kNsPerMs);
                co_await pool.acquire(1);
                actual[{cam, cyc}] = k.now();
                co_await k.sleep_for(kHold);
                pool.release(1);
            }
        }(k, *pool, actual, cam));
    }
    k.run();

    REQUIRE(actual.size() == expected.size());
    for (const auto& [key, t] : expected) {
        CHECK(actual.at(key) == t);
    }
}

TEST_CASE("a deadlocked kernel reports instead of hanging") {
    SimKernel k(ClockMode::Virtual);
    auto q = std::make_unique<BoundedQueue<int>>(k, 1);
    k.spawn([](SimKernel&, BoundedQueue<int>& q) -> SimTask<void> {
        (void)co_await q.pop();  // nobody will ever push
    }(k, *q));
    CHECK_THROWS_AS(k.run(), svs::RuntimeError);
}

namespace {

SimTask<void> park_for_an_hour(SimKernel& k) { co_await k.sleep_until(svs::sec_to_ns(3600)); }

// Parks through a child frame so teardown has a suspended call chain to free.
SimTask<void> park_nested(SimKernel& k) { co_await park_for_an_hour(k); }

SimTask<void> throw_at(SimKernel& k, TimeNs t) {
    co_await k.sleep_until(t);
    throw svs::RuntimeError("boom");
}

}  // namespace

TEST_CASE("kernel teardown frees in-flight task chains exactly once") {
    SUBCASE("spawned but never run") {
        SimKernel k;
        k.spawn(park_for_an_hour(k));
        CHECK(k.active_roots() == 1);
    }  // ~SimKernel must not double-free the pending start event

    SUBCASE("a task failure aborts the run with chains still suspended") {
        SimKernel k;
        k.spawn(park_nested(k));
        k.spawn(throw_at(k, 1000));
        CHECK_THROWS_WITH_AS(k.run(), "boom", svs::RuntimeError);
        CHECK(k.active_roots() == 1);  // the parked chain never completed
    }  // ~SimKernel frees the parked root and its child frame
}
