#ifndef OPC_THREAD_POOL_HPP_
#define OPC_THREAD_POOL_HPP_

#include <cstddef>
#include <functional>

namespace opc {

// Process-wide worker cap for parallel_for. 1 = fully serial execution.
void set_thread_count(std::size_t n);
std::size_t thread_count();

// Runs fn(i) for i in [0, n). Work is split into contiguous static chunks,
// one per worker, so every element is computed by exactly one thread in
// index order. There are no cross-thread reductions: results are bit
// identical for any thread count as long as fn writes only to slot i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace opc

#endif  // OPC_THREAD_POOL_HPP_
