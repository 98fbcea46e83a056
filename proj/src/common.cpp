#include "leap/common.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>

namespace leap {

int max_threads() {
  static int cached = [] {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("LEAP_THREADS")) {
      char* end = nullptr;
      long v = std::strtol(env, &end, 10);
      if (end == env || v < 1) fail("LEAP_THREADS must be a positive integer");
      return static_cast<int>(std::min<long>(v, 1024));
    }
    return hw;
  }();
  return cached;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t block) {
  if (n == 0) return;
  int workers = max_threads();
  if (workers <= 1 || n <= block) {
    fn(0, n);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (;;) {
      std::size_t b = next.fetch_add(block);
      if (b >= n) return;
      fn(b, std::min(n, b + block));
    }
  };
  std::vector<std::thread> pool;
  int spawn = std::min<int>(workers, static_cast<int>((n + block - 1) / block));
  pool.reserve(spawn - 1);
  for (int i = 1; i < spawn; ++i) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
}

}  // namespace leap
