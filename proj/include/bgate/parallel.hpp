#pragma once

#include <functional>

namespace bgate {

/// Worker count used by parallel_for when callers pass 0. Defaults to the
/// hardware concurrency.
void set_thread_count(int threads);
int thread_count();

/// Runs body(i) for i in [0, n) on up to `threads` workers (0 = thread_count()).
/// Nested calls from inside a worker run serially. Exceptions are rethrown on
/// the calling thread (the one from the lowest index wins).
void parallel_for(int n, const std::function<void(int)>& body, int threads = 0);

}  // namespace bgate
