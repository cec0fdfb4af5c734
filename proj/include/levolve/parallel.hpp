#pragma once

namespace levolve {

// Worker count for data-parallel loops: LEVOLVE_THREADS when set to a
// positive integer, otherwise the OpenMP default.
int worker_count();

}  // namespace levolve
