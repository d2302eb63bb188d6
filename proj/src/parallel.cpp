#include "fluidrisk/parallel.hpp"

#include <omp.h>

namespace fluidrisk {

void set_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

int thread_count() { return omp_get_max_threads(); }

}  // namespace fluidrisk
