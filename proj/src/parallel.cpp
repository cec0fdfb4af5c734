#include "levolve/parallel.hpp"

#include <omp.h>

#include <charconv>
#include <cstdlib>
#include <cstring>

namespace levolve {

int worker_count() {
  int limit = omp_get_max_threads();
  if (const char* env = std::getenv("LEVOLVE_THREADS")) {
    int value = 0;
    auto [ptr, ec] = std::from_chars(env, env + std::strlen(env), value);
    if (ec == std::errc{} && value > 0) limit = value;
  }
  return limit < 1 ? 1 : limit;
}

}  // namespace levolve
