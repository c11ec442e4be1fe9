#include "bharp/parallel.hpp"

#include <omp.h>

namespace bharp {

namespace {
int g_workers = 0;
}

void set_worker_count(int workers) {
  g_workers = workers > 0 ? workers : 0;
}

int worker_count() { return g_workers > 0 ? g_workers : omp_get_max_threads(); }

}  // namespace bharp
