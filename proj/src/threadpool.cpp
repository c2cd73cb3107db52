#include "ddrid/threadpool.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace ddrid {
namespace {

thread_local bool g_inside_pool = false;

// Each run gets its own counters; workers grab the current round under the
// mutex, so a worker waking late can only ever touch its own (finished)
// round, never the counters of a newer one.
struct Round {
    const std::function<void(int64_t)>* fn = nullptr;
    std::atomic<int64_t> next{0};
    int64_t total = 0;
    std::atomic<int64_t> pending{0};
};

class Pool {
public:
    explicit Pool(int workers) {
        for (int i = 0; i < workers; ++i) {
            threads_.emplace_back([this] { worker_loop(); });
        }
    }

    ~Pool() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void run(int64_t n_jobs, const std::function<void(int64_t)>& fn) {
        auto r = std::make_shared<Round>();
        r->fn = &fn;
        r->total = n_jobs;
        r->pending.store(n_jobs, std::memory_order_relaxed);
        {
            std::lock_guard<std::mutex> lk(mu_);
            round_ = r;
            ++generation_;
        }
        cv_.notify_all();

        work(*r);  // caller participates

        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.wait(lk, [&] { return r->pending.load(std::memory_order_acquire) == 0; });
        if (round_ == r) round_.reset();
    }

private:
    void worker_loop() {
        g_inside_pool = true;
        uint64_t seen = 0;
        for (;;) {
            std::shared_ptr<Round> r;
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
                r = round_;
            }
            if (r) work(*r);
        }
    }

    void work(Round& r) {
        for (;;) {
            const int64_t i = r.next.fetch_add(1, std::memory_order_relaxed);
            if (i >= r.total) break;
            (*r.fn)(i);
            if (r.pending.fetch_sub(1, std::memory_order_acq_rel) == 1) {
                std::lock_guard<std::mutex> lk(mu_);
                done_cv_.notify_all();
            }
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    std::shared_ptr<Round> round_;
    uint64_t generation_ = 0;
    bool stop_ = false;
};

}  // namespace

int worker_count() {
    static int n = [] {
        if (const char* env = std::getenv("DDRID_THREADS")) {
            int k = std::atoi(env);
            if (k >= 1) return k;
        }
        unsigned hc = std::thread::hardware_concurrency();
        return hc == 0 ? 1 : static_cast<int>(hc);
    }();
    return n;
}

void parallel_for(int64_t n_jobs, const std::function<void(int64_t)>& fn) {
    if (n_jobs <= 0) return;
    const int workers = worker_count();
    if (n_jobs == 1 || workers == 1 || g_inside_pool) {
        for (int64_t i = 0; i < n_jobs; ++i) fn(i);
        return;
    }
    static Pool pool(worker_count() - 1);
    pool.run(n_jobs, fn);
}

}  // namespace ddrid
