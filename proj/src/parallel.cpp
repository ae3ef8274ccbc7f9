#include "lulc/parallel.hpp"

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace lulc {

int default_threads() {
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

std::size_t chunk_count(std::size_t n, int threads) {
  return std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
}

void parallel_chunks(std::size_t n, int threads,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  const std::size_t chunks = chunk_count(n, threads);
  if (chunks == 0) return;
  auto bounds = [&](std::size_t c) { return std::pair{c * n / chunks, (c + 1) * n / chunks}; };
  if (chunks == 1) {
    fn(0, 0, n);
    return;
  }
  std::vector<std::exception_ptr> errors(chunks);
  std::vector<std::thread> workers;
  workers.reserve(chunks - 1);
  for (std::size_t c = 1; c < chunks; ++c) {
    workers.emplace_back([&, c] {
      try {
        const auto [b, e] = bounds(c);
        fn(c, b, e);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  try {
    const auto [b, e] = bounds(0);
    fn(0, b, e);
  } catch (...) {
    errors[0] = std::current_exception();
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace lulc
