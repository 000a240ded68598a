// OpenMP twins of the serial kernels. Work is split across independent output
// elements only; the accumulation loop for each element is byte-for-byte the
// serial one, so results are bit-identical to kernels::serial regardless of
// thread count.

#include <cstddef>

#include "fbkws/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fbkws::kernels::omp {

void matmul(const float* a, const float* b, float* c, int m, int n, int p,
            bool ta, bool tb, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < p; ++j) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) {
        float av = ta ? a[static_cast<size_t>(k) * m + i] : a[static_cast<size_t>(i) * n + k];
        float bv = tb ? b[static_cast<size_t>(j) * n + k] : b[static_cast<size_t>(k) * p + j];
        acc += static_cast<double>(av) * static_cast<double>(bv);
      }
      size_t idx = static_cast<size_t>(i) * p + j;
      c[idx] = accumulate ? c[idx] + static_cast<float>(acc) : static_cast<float>(acc);
    }
  }
}

void conv2d_forward(const Conv2dShape& s, const float* in, const float* ker, float* out) {
  const int k = s.ksize, c0 = s.ksize / 2, H = s.height, W = s.width;
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < s.batch; ++b) {
    for (int co = 0; co < s.out_ch; ++co) {
      for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
          double acc = 0.0;
          for (int u = 0; u < k; ++u) {
            int y = i + s.dil_h * (u - c0);
            if (static_cast<unsigned>(y) >= static_cast<unsigned>(H)) continue;
            for (int v = 0; v < k; ++v) {
              int x = j + s.dil_w * (v - c0);
              if (static_cast<unsigned>(x) >= static_cast<unsigned>(W)) continue;
              const float* inp = in + ((static_cast<size_t>(b) * s.in_ch) * H + y) * W + x;
              const float* kp = ker + ((static_cast<size_t>(co) * s.in_ch) * k + u) * k + v;
              for (int ci = 0; ci < s.in_ch; ++ci) {
                acc += static_cast<double>(inp[static_cast<size_t>(ci) * H * W]) *
                       static_cast<double>(kp[static_cast<size_t>(ci) * k * k]);
              }
            }
          }
          out[((static_cast<size_t>(b) * s.out_ch + co) * H + i) * W + j] =
              static_cast<float>(acc);
        }
      }
    }
  }
}

void conv2d_grad_input(const Conv2dShape& s, const float* dout, const float* ker, float* din) {
  const int k = s.ksize, c0 = s.ksize / 2, H = s.height, W = s.width;
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < s.batch; ++b) {
    for (int ci = 0; ci < s.in_ch; ++ci) {
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          double acc = 0.0;
          for (int u = 0; u < k; ++u) {
            int i = y - s.dil_h * (u - c0);
            if (static_cast<unsigned>(i) >= static_cast<unsigned>(H)) continue;
            for (int v = 0; v < k; ++v) {
              int j = x - s.dil_w * (v - c0);
              if (static_cast<unsigned>(j) >= static_cast<unsigned>(W)) continue;
              const float* dop = dout + ((static_cast<size_t>(b) * s.out_ch) * H + i) * W + j;
              const float* kp = ker + ((static_cast<size_t>(0) * s.in_ch + ci) * k + u) * k + v;
              for (int co = 0; co < s.out_ch; ++co) {
                acc += static_cast<double>(dop[static_cast<size_t>(co) * H * W]) *
                       static_cast<double>(kp[static_cast<size_t>(co) * s.in_ch * k * k]);
              }
            }
          }
          din[((static_cast<size_t>(b) * s.in_ch + ci) * H + y) * W + x] =
              static_cast<float>(acc);
        }
      }
    }
  }
}

void conv2d_grad_kernel(const Conv2dShape& s, const float* dout, const float* in, float* dker) {
  const int k = s.ksize, c0 = s.ksize / 2, H = s.height, W = s.width;
#pragma omp parallel for collapse(2) schedule(static)
  for (int co = 0; co < s.out_ch; ++co) {
    for (int ci = 0; ci < s.in_ch; ++ci) {
      for (int u = 0; u < k; ++u) {
        for (int v = 0; v < k; ++v) {
          double acc = 0.0;
          for (int b = 0; b < s.batch; ++b) {
            const float* dop = dout + (static_cast<size_t>(b) * s.out_ch + co) * H * W;
            const float* inp = in + (static_cast<size_t>(b) * s.in_ch + ci) * H * W;
            for (int i = 0; i < H; ++i) {
              int y = i + s.dil_h * (u - c0);
              if (static_cast<unsigned>(y) >= static_cast<unsigned>(H)) continue;
              for (int j = 0; j < W; ++j) {
                int x = j + s.dil_w * (v - c0);
                if (static_cast<unsigned>(x) >= static_cast<unsigned>(W)) continue;
                acc += static_cast<double>(dop[static_cast<size_t>(i) * W + j]) *
                       static_cast<double>(inp[static_cast<size_t>(y) * W + x]);
              }
            }
          }
          dker[((static_cast<size_t>(co) * s.in_ch + ci) * k + u) * k + v] =
              static_cast<float>(acc);
        }
      }
    }
  }
}

}  // namespace fbkws::kernels::omp
