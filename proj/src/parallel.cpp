#include "actlearn/parallel.hpp"

#include <atomic>
#include <mutex>
#include <thread>
#include <vector>

namespace actlearn {

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn,
                  int threads) {
    if (count == 0) return;
    unsigned n_workers = threads > 0 ? static_cast<unsigned>(threads)
                                     : std::thread::hardware_concurrency();
    if (n_workers == 0) n_workers = 1;
    if (n_workers > count) n_workers = static_cast<unsigned>(count);

    if (n_workers == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace actlearn
