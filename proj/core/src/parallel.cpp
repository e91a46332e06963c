#include "ctstd/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ctstd {

namespace {

thread_local bool t_in_worker = false;

class Pool {
public:
    explicit Pool(int workers) {
        for (int i = 0; i < workers; ++i)
            threads_.emplace_back([this] { worker_loop(); });
    }

    ~Pool() {
        {
            std::lock_guard lk(m_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void run(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
        const int parts = static_cast<int>(threads_.size()) + 1;
        {
            std::lock_guard lk(m_);
            fn_ = &fn;
            n_ = n;
            parts_ = parts;
            next_part_ = 1;  // part 0 belongs to the caller
            remaining_ = parts - 1;
            error_ = nullptr;
            ++generation_;
        }
        cv_.notify_all();
        try {
            run_part(0, n, parts, fn);
        } catch (...) {
            std::lock_guard lk(m_);
            if (!error_) error_ = std::current_exception();
        }
        std::unique_lock lk(m_);
        done_cv_.wait(lk, [this] { return remaining_ == 0; });
        fn_ = nullptr;
        if (error_) {
            std::exception_ptr e = error_;
            error_ = nullptr;
            lk.unlock();
            std::rethrow_exception(e);
        }
    }

private:
    static void run_part(int part, int64_t n, int parts,
                         const std::function<void(int64_t, int64_t)>& fn) {
        const int64_t chunk = (n + parts - 1) / parts;
        const int64_t begin = std::min<int64_t>(n, part * chunk);
        const int64_t end = std::min<int64_t>(n, begin + chunk);
        if (begin < end) fn(begin, end);
    }

    void worker_loop() {
        t_in_worker = true;
        uint64_t seen = 0;
        while (true) {
            const std::function<void(int64_t, int64_t)>* fn = nullptr;
            int part = 0, parts = 0;
            int64_t n = 0;
            {
                std::unique_lock lk(m_);
                cv_.wait(lk, [&] { return stop_ || (generation_ != seen && next_part_ < parts_); });
                if (stop_) return;
                seen = generation_;
                part = next_part_++;
                parts = parts_;
                n = n_;
                fn = fn_;
            }
            try {
                run_part(part, n, parts, *fn);
            } catch (...) {
                std::lock_guard lk(m_);
                if (!error_) error_ = std::current_exception();
            }
            {
                std::lock_guard lk(m_);
                if (--remaining_ == 0) done_cv_.notify_all();
            }
        }
    }

    std::vector<std::thread> threads_;
    std::mutex m_;
    std::condition_variable cv_, done_cv_;
    std::exception_ptr error_ = nullptr;
    const std::function<void(int64_t, int64_t)>* fn_ = nullptr;
    int64_t n_ = 0;
    int parts_ = 0;
    int next_part_ = 0;
    int remaining_ = 0;
    uint64_t generation_ = 0;
    bool stop_ = false;
};

}  // namespace

int thread_cap() {
    static const int cap = [] {
        if (const char* env = std::getenv("CTSTD_THREADS")) {
            const int v = std::atoi(env);
            if (v >= 1) return std::min(v, 64);
            return 1;
        }
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(std::min(hw, 64u));
    }();
    return cap;
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    const int cap = thread_cap();
    if (cap <= 1 || t_in_worker || n == 1) {
        fn(0, n);
        return;
    }
    static Pool pool(thread_cap() - 1);
    pool.run(n, fn);
}

}  // namespace ctstd
