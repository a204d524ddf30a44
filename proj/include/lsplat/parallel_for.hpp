#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace lsplat {

// Persistent worker pool behind parallel_for. Work is split into fixed
// contiguous ranges, so every element is processed by exactly one task and
// results do not depend on which thread picks which range.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool(default_threads());
        return pool;
    }

    static unsigned default_threads() {
        unsigned n = std::thread::hardware_concurrency();
        return n == 0 ? 1 : n;
    }

    unsigned size() const { return static_cast<unsigned>(workers_.size()) + 1; }

    // Runs fn(thread_index, begin, end) over disjoint ranges covering [0, n).
    void run_ranges(std::int64_t n, const std::function<void(unsigned, std::int64_t, std::int64_t)>& fn) {
        if (n <= 0) return;
        const unsigned nthreads = size();
        const std::int64_t chunk = (n + nthreads - 1) / nthreads;
        {
            std::unique_lock<std::mutex> lk(mu_);
            job_ = &fn;
            job_n_ = n;
            job_chunk_ = chunk;
            pending_ = 0;
            for (unsigned t = 1; t < nthreads; ++t) {
                if (static_cast<std::int64_t>(t) * chunk < n) ++pending_;
            }
            ++generation_;
        }
        cv_.notify_all();
        // Calling thread takes range 0.
        fn(0, 0, std::min<std::int64_t>(chunk, n));
        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.wait(lk, [&] { return pending_ == 0; });
        job_ = nullptr;
    }

    ~ThreadPool() {
        {
            std::unique_lock<std::mutex> lk(mu_);
            stop_ = true;
            ++generation_;
        }
        cv_.notify_all();
        for (auto& w : workers_) w.join();
    }

private:
    explicit ThreadPool(unsigned nthreads) {
        for (unsigned t = 1; t < nthreads; ++t) {
            workers_.emplace_back([this, t] { worker_loop(t); });
        }
    }

    void worker_loop(unsigned index) {
        std::uint64_t seen = 0;
        for (;;) {
            const std::function<void(unsigned, std::int64_t, std::int64_t)>* job = nullptr;
            std::int64_t n = 0, chunk = 0;
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
                seen = generation_;
                if (stop_) return;
                job = job_;
                n = job_n_;
                chunk = job_chunk_;
            }
            if (!job) continue;
            const std::int64_t begin = static_cast<std::int64_t>(index) * chunk;
            if (begin < n) {
                (*job)(index, begin, std::min(begin + chunk, n));
                std::unique_lock<std::mutex> lk(mu_);
                if (--pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    const std::function<void(unsigned, std::int64_t, std::int64_t)>* job_ = nullptr;
    std::int64_t job_n_ = 0, job_chunk_ = 0;
    int pending_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
};

// fn(i) for i in [0, n), partitioned across the pool. Deterministic as long as
// distinct iterations touch distinct outputs.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn, std::int64_t serial_cutoff = 256) {
    if (n <= 0) return;
    if (n <= serial_cutoff || ThreadPool::instance().size() == 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    ThreadPool::instance().run_ranges(n, [&](unsigned, std::int64_t b, std::int64_t e) {
        for (std::int64_t i = b; i < e; ++i) fn(i);
    });
}

// Range flavor: fn(begin, end) once per worker-range.
template <typename Fn>
void parallel_for_ranges(std::int64_t n, Fn&& fn) {
    if (n <= 0) return;
    if (ThreadPool::instance().size() == 1) {
        fn(0, n);
        return;
    }
    ThreadPool::instance().run_ranges(n, [&](unsigned, std::int64_t b, std::int64_t e) { fn(b, e); });
}

}  // namespace lsplat
