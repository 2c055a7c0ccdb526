#pragma once

#include <cstdint>

// Analytic arithmetic-operation counter. Kernels add the number of
// multiply-add style operations they perform; the counter is thread-local so
// concurrent runs do not interfere.
namespace maskdl::ops {

inline thread_local std::uint64_t counter = 0;

inline void add(std::uint64_t n) { counter += n; }
inline std::uint64_t count() { return counter; }
inline void reset() { counter = 0; }

}  // namespace maskdl::ops
