#pragma once

#include <cstddef>
#include <exception>

#include "oodnorm/matrix.hpp"

namespace oodnorm {

/// Evaluate kernel(i) for i in [0, n) into a preallocated vector, optionally
/// across OpenMP threads. Each slot is written exactly once and the kernel
/// must not touch shared mutable state, so results are identical for any
/// thread count. The first thrown exception is rethrown on the calling thread.
template <typename Kernel>
Vector parallel_map(std::size_t n, bool parallel, Kernel&& kernel) {
    Vector out(n);
    std::exception_ptr err = nullptr;
    const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for if (parallel) schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            out[static_cast<std::size_t>(i)] = kernel(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical
            if (err == nullptr) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
    return out;
}

} // namespace oodnorm
