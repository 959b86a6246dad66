#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

#include "mlenkf/integrate.hpp"

namespace mlenkf {

/// Runs body(begin, end, tally) over contiguous chunks of [0, n) on up to
/// `threads` workers and returns the merged substep tally. Chunk boundaries do
/// not influence results as long as body(i) only touches item i.
template <class Body>
CostTally parallel_for(std::size_t n, std::size_t threads, Body&& body) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<CostTally> tallies(workers);
  if (workers == 1) {
    body(std::size_t{0}, n, tallies[0]);
    return tallies[0];
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = std::min(n, w * chunk);
      const std::size_t end = std::min(n, begin + chunk);
      pool.emplace_back([&, w, begin, end] {
        try {
          body(begin, end, tallies[w]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  CostTally total;
  for (const auto& t : tallies) total.substeps += t.substeps;
  return total;
}

}  // namespace mlenkf
