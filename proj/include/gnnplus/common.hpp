#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gnnplus {

// Error taxonomy. Everything user-facing derives from Error so the CLI can
// catch one type and map it to a nonzero exit.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : Error {
  using Error::Error;
};
struct IndexError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct StateError : Error {
  using Error::Error;
};
struct DatasetError : Error {
  using Error::Error;
};

using Shape = std::vector<int64_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

enum class Mode { train, eval };

// Static partition of [0,n) across at most max_threads workers. fn(begin, end)
// must not touch shared mutable state; results are deterministic because the
// partition depends only on n and the thread count never reorders work items.
template <typename Fn>
void parallel_for(int64_t n, int max_threads, Fn&& fn) {
  if (n <= 0) return;
  int workers = max_threads < 1 ? 1 : max_threads;
  if (workers > n) workers = static_cast<int>(n);
  if (workers == 1) {
    fn(int64_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    int64_t b = w * chunk;
    int64_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace gnnplus
