#pragma once

#include <cstddef>
#include <new>
#include <vector>

namespace bilevel::nn {

/// 64-byte aligned allocator. Vectorized kernels choose their peeling by the
/// address alignment, so every buffer starting on the same boundary keeps the
/// floating-point reduction order, and therefore results, run-independent.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

}  // namespace bilevel::nn
