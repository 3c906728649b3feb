#pragma once

#include <complex>
#include <cstddef>
#include <new>
#include <vector>

namespace onset::fft {

using cplx = std::complex<double>;

void* aligned_alloc_bytes(std::size_t bytes);
void aligned_free(void* p) noexcept;

/// Allocator returning FFTW-aligned storage, so any buffer can be passed to a plan.
template <class T>
struct Allocator {
    using value_type = T;
    Allocator() = default;
    template <class U>
    Allocator(const Allocator<U>&) {}
    T* allocate(std::size_t n) {
        if (n == 0) return nullptr;
        auto* p = static_cast<T*>(aligned_alloc_bytes(n * sizeof(T)));
        if (!p) throw std::bad_alloc();
        return p;
    }
    void deallocate(T* p, std::size_t) noexcept { aligned_free(p); }
    template <class U>
    bool operator==(const Allocator<U>&) const { return true; }
};

using cvec = std::vector<cplx, Allocator<cplx>>;

/// In-place 1D complex transform pair of fixed length (FFTW, estimate plans).
/// forward: X_m = sum_j x_j e^{-2 pi i jm/n}; backward has the + sign and no 1/n.
/// Plans are created under a global lock; execution is thread-safe as long
/// as each thread works on its own buffer.
class Plan {
public:
    explicit Plan(std::size_t n);
    ~Plan();
    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;
    Plan(Plan&& other) noexcept;
    Plan& operator=(Plan&& other) noexcept;

    std::size_t size() const { return n_; }
    void forward(cvec& data) const;
    void backward(cvec& data) const;

private:
    std::size_t n_ = 0;
    void* fwd_ = nullptr;
    void* bwd_ = nullptr;
};

/// FFTW library version string, for manifests.
const char* library_version();

}  // namespace onset::fft
