#include "onset/fft.hpp"

#include <fftw3.h>

#include <mutex>

#include "onset/units.hpp"

namespace onset::fft {

namespace {
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace

void* aligned_alloc_bytes(std::size_t bytes) { return fftw_malloc(bytes); }
void aligned_free(void* p) noexcept { fftw_free(p); }

Plan::Plan(std::size_t n) : n_(n) {
    if (n == 0) throw InvalidArgument("fft::Plan: length must be > 0");
    cvec scratch(n);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    std::lock_guard<std::mutex> lock(planner_mutex());
    fwd_ = fftw_plan_dft_1d(int(n), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_1d(int(n), buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
    if (!fwd_ || !bwd_) throw Error("fft::Plan: FFTW could not create a plan");
}

Plan::~Plan() {
    if (!fwd_ && !bwd_) return;
    std::lock_guard<std::mutex> lock(planner_mutex());
    if (fwd_) fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
    if (bwd_) fftw_destroy_plan(static_cast<fftw_plan>(bwd_));
}

Plan::Plan(Plan&& other) noexcept : n_(other.n_), fwd_(other.fwd_), bwd_(other.bwd_) {
    other.fwd_ = other.bwd_ = nullptr;
    other.n_ = 0;
}

Plan& Plan::operator=(Plan&& other) noexcept {
    if (this != &other) {
        this->~Plan();
        n_ = other.n_;
        fwd_ = other.fwd_;
        bwd_ = other.bwd_;
        other.fwd_ = other.bwd_ = nullptr;
        other.n_ = 0;
    }
    return *this;
}

void Plan::forward(cvec& data) const {
    if (data.size() != n_) throw InvalidArgument("fft::Plan::forward: buffer length mismatch");
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(static_cast<fftw_plan>(fwd_), buf, buf);
}

void Plan::backward(cvec& data) const {
    if (data.size() != n_) throw InvalidArgument("fft::Plan::backward: buffer length mismatch");
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(static_cast<fftw_plan>(bwd_), buf, buf);
}

const char* library_version() { return fftw_version; }

}  // namespace onset::fft
