#pragma once

// Compute kernels behind the tensor graph. Every kernel exists twice: a plain
// serial reference (namespace serial) and an OpenMP variant (namespace omp).
// The OpenMP variants parallelize only across independent output elements and
// keep the per-element accumulation order identical to the serial code, so
// both backends produce bit-identical results. bench/bench_kernels compares
// the two.

namespace fbkws::kernels {

enum class Backend { kSerial, kOpenMP };

Backend backend();
void set_backend(Backend b);
bool openmp_compiled();
int max_threads();

// C[m x p] = opA(A) * opB(B), accumulated in double per output element.
// opA(A) is m x n (ta transposes a stored n x m), opB(B) is n x p likewise.
// With accumulate, adds into C instead of overwriting.
void matmul(const float* a, const float* b, float* c, int m, int n, int p,
            bool ta, bool tb, bool accumulate);

struct Conv2dShape {
  int batch = 1;
  int in_ch = 1;
  int out_ch = 1;
  int height = 1;  // spatial size preserved by zero padding
  int width = 1;
  int ksize = 3;   // square kernel, odd
  int dil_h = 1;
  int dil_w = 1;
};

// Cross-correlation with "same" zero padding: out[b,co,i,j] =
//   sum_{ci,u,v} in[b,ci, i + dil_h*(u-k/2), j + dil_w*(v-k/2)] * ker[co,ci,u,v].
void conv2d_forward(const Conv2dShape& s, const float* in, const float* ker, float* out);
// din[b,ci,y,x] = sum_{co,u,v} dout[b,co, y - dil_h*(u-k/2), x - dil_w*(v-k/2)] * ker[co,ci,u,v]
void conv2d_grad_input(const Conv2dShape& s, const float* dout, const float* ker, float* din);
// dker[co,ci,u,v] = sum_{b,i,j} dout[b,co,i,j] * in[b,ci, i + dil_h*(u-k/2), j + dil_w*(v-k/2)]
void conv2d_grad_kernel(const Conv2dShape& s, const float* dout, const float* in, float* dker);

namespace serial {
void matmul(const float* a, const float* b, float* c, int m, int n, int p,
            bool ta, bool tb, bool accumulate);
void conv2d_forward(const Conv2dShape& s, const float* in, const float* ker, float* out);
void conv2d_grad_input(const Conv2dShape& s, const float* dout, const float* ker, float* din);
void conv2d_grad_kernel(const Conv2dShape& s, const float* dout, const float* in, float* dker);
}  // namespace serial

namespace omp {
void matmul(const float* a, const float* b, float* c, int m, int n, int p,
            bool ta, bool tb, bool accumulate);
void conv2d_forward(const Conv2dShape& s, const float* in, const float* ker, float* out);
void conv2d_grad_input(const Conv2dShape& s, const float* dout, const float* ker, float* din);
void conv2d_grad_kernel(const Conv2dShape& s, const float* dout, const float* in, float* dker);
}  // namespace omp

}  // namespace fbkws::kernels
