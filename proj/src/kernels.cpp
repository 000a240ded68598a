#include "fbkws/kernels.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fbkws::kernels {

namespace {
std::atomic<Backend> g_backend{
#ifdef _OPENMP
    Backend::kOpenMP
#else
    Backend::kSerial
#endif
};
}  // namespace

Backend backend() { return g_backend.load(std::memory_order_relaxed); }
void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }

bool openmp_compiled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void matmul(const float* a, const float* b, float* c, int m, int n, int p,
            bool ta, bool tb, bool accumulate) {
  if (backend() == Backend::kOpenMP) {
    omp::matmul(a, b, c, m, n, p, ta, tb, accumulate);
  } else {
    serial::matmul(a, b, c, m, n, p, ta, tb, accumulate);
  }
}

void conv2d_forward(const Conv2dShape& s, const float* in, const float* ker, float* out) {
  if (backend() == Backend::kOpenMP) {
    omp::conv2d_forward(s, in, ker, out);
  } else {
    serial::conv2d_forward(s, in, ker, out);
  }
}

void conv2d_grad_input(const Conv2dShape& s, const float* dout, const float* ker, float* din) {
  if (backend() == Backend::kOpenMP) {
    omp::conv2d_grad_input(s, dout, ker, din);
  } else {
    serial::conv2d_grad_input(s, dout, ker, din);
  }
}

void conv2d_grad_kernel(const Conv2dShape& s, const float* dout, const float* in, float* dker) {
  if (backend() == Backend::kOpenMP) {
    omp::conv2d_grad_kernel(s, dout, in, dker);
  } else {
    serial::conv2d_grad_kernel(s, dout, in, dker);
  }
}

}  // namespace fbkws::kernels
