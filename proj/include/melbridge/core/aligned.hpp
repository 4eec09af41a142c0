#pragma once

#include <cstddef>
#include <new>
#include <vector>

namespace melbridge {

/// 64-byte-aligned allocator for numeric buffers that Eigen maps. Keeping
/// every mapped base pointer cache-line aligned makes Eigen's vectorized
/// loop peeling a function of (deterministic) element offsets instead of
/// heap addresses, so summation order — and therefore the low bits of
/// results — cannot drift between allocations of the same computation.
template <typename T>
struct AlignedAlloc {
    using value_type = T;
    static constexpr std::size_t kAlign = 64;

    AlignedAlloc() = default;
    template <typename U>
    AlignedAlloc(const AlignedAlloc<U>&) {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(kAlign)));
    }
    void deallocate(T* p, std::size_t) noexcept {
        ::operator delete(p, std::align_val_t(kAlign));
    }

    template <typename U>
    bool operator==(const AlignedAlloc<U>&) const {
        return true;
    }
    template <typename U>
    bool operator!=(const AlignedAlloc<U>&) const {
        return false;
    }
};

template <typename T>
using AlignedVec = std::vector<T, AlignedAlloc<T>>;

}  // namespace melbridge
