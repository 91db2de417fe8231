#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace selfj {

// Value or failure message for one item of a fan-out.
template <class T>
struct Outcome {
  std::optional<T> value;
  std::string error;

  bool ok() const noexcept { return value.has_value(); }
};

// Applies fn to indices [0, count) on at most `parallelism` threads.
// Results come back in index order; an exception from fn becomes that
// item's error and never aborts the other items.
template <class T>
std::vector<Outcome<T>> bounded_map(std::size_t count, int parallelism,
                                    const std::function<T(std::size_t)>& fn) {
  std::vector<Outcome<T>> out(count);
  auto run_one = [&](std::size_t i) {
    try {
      out[i].value.emplace(fn(i));
    } catch (const std::exception& e) {
      out[i].error = e.what();
    } catch (...) {
      out[i].error = "unknown error";
    }
  };
  const std::size_t workers =
      std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, parallelism)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) run_one(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) run_one(i);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

}  // namespace selfj
