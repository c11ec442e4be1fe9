#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#include <omp.h>

namespace bharp {

// Selects between the OpenMP kernels and their serial reference versions.
// Both produce bit-identical results; the serial path exists for tests and
// the benchmark.
enum class Exec { kSerial, kParallel };

// Worker count used by Exec::kParallel regions (0 = OpenMP default).
void set_worker_count(int workers);
int worker_count();

// Runs body(i) for i in [0, n). Each index must write only to its own
// output slot. Nested calls inside a parallel region run serially. The
// first exception by index order is rethrown after all work finishes.
template <class Body>
void for_each_index(int n, Exec exec, Body&& body) {
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(n > 0 ? n : 0));
  const bool go_parallel = exec == Exec::kParallel && n > 1 && !omp_in_parallel();
#pragma omp parallel for schedule(dynamic) if (go_parallel) num_threads(worker_count())
  for (int i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      failures[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);
}

}  // namespace bharp
