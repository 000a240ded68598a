// Times the serial reference kernels against their OpenMP counterparts and
// asserts bit-identical outputs on every compared case. --quick shrinks the
// problem sizes and repetition counts so the binary can run under ctest.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "fbkws/kernels.hpp"
#include "fbkws/rng.hpp"

using namespace fbkws;
using Clock = std::chrono::steady_clock;

namespace {

int g_mismatches = 0;

std::vector<float> random_vec(size_t n, Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

template <typename F>
double time_best_ms(int reps, F&& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    auto t0 = Clock::now();
    fn();
    auto t1 = Clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void check_equal(const std::vector<float>& a, const std::vector<float>& b,
                 const std::string& what) {
  if (std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) != 0) {
    ++g_mismatches;
    std::printf("MISMATCH %s: serial and OpenMP outputs differ\n", what.c_str());
  }
}

void bench_matmul(int m, int n, int p, int reps, Rng& rng) {
  auto a = random_vec(static_cast<size_t>(m) * n, rng);
  auto b = random_vec(static_cast<size_t>(n) * p, rng);
  std::vector<float> c_serial(static_cast<size_t>(m) * p);
  std::vector<float> c_omp(c_serial.size());

  double t_serial = time_best_ms(reps, [&] {
    kernels::serial::matmul(a.data(), b.data(), c_serial.data(), m, n, p, false, false, false);
  });
  double t_omp = time_best_ms(reps, [&] {
    kernels::omp::matmul(a.data(), b.data(), c_omp.data(), m, n, p, false, false, false);
  });
  check_equal(c_serial, c_omp, "matmul " + std::to_string(m) + "x" + std::to_string(n) + "x" +
                                   std::to_string(p));
  std::printf("matmul  %4dx%4dx%4d   serial %8.2f ms   omp %8.2f ms   speedup %5.2fx\n", m, n,
              p, t_serial, t_omp, t_serial / t_omp);
}

void bench_conv(const kernels::Conv2dShape& s, int reps, Rng& rng) {
  const size_t in_n = static_cast<size_t>(s.batch) * s.in_ch * s.height * s.width;
  const size_t ker_n = static_cast<size_t>(s.out_ch) * s.in_ch * s.ksize * s.ksize;
  const size_t out_n = static_cast<size_t>(s.batch) * s.out_ch * s.height * s.width;
  auto in = random_vec(in_n, rng);
  auto ker = random_vec(ker_n, rng);
  auto dout = random_vec(out_n, rng);

  std::vector<float> out_serial(out_n), out_omp(out_n);
  std::vector<float> din_serial(in_n), din_omp(in_n);
  std::vector<float> dker_serial(ker_n), dker_omp(ker_n);

  double tf_s = time_best_ms(
      reps, [&] { kernels::serial::conv2d_forward(s, in.data(), ker.data(), out_serial.data()); });
  double tf_o = time_best_ms(
      reps, [&] { kernels::omp::conv2d_forward(s, in.data(), ker.data(), out_omp.data()); });
  double ti_s = time_best_ms(reps, [&] {
    kernels::serial::conv2d_grad_input(s, dout.data(), ker.data(), din_serial.data());
  });
  double ti_o = time_best_ms(
      reps, [&] { kernels::omp::conv2d_grad_input(s, dout.data(), ker.data(), din_omp.data()); });
  double tk_s = time_best_ms(reps, [&] {
    kernels::serial::conv2d_grad_kernel(s, dout.data(), in.data(), dker_serial.data());
  });
  double tk_o = time_best_ms(
      reps, [&] { kernels::omp::conv2d_grad_kernel(s, dout.data(), in.data(), dker_omp.data()); });

  std::string tag = "b" + std::to_string(s.batch) + " c" + std::to_string(s.in_ch) + "->" +
                    std::to_string(s.out_ch) + " " + std::to_string(s.height) + "x" +
                    std::to_string(s.width) + " dil" + std::to_string(s.dil_h);
  check_equal(out_serial, out_omp, "conv2d_forward " + tag);
  check_equal(din_serial, din_omp, "conv2d_grad_input " + tag);
  check_equal(dker_serial, dker_omp, "conv2d_grad_kernel " + tag);

  std::printf("conv2d  %-26s forward %8.2f/%8.2f ms   dinput %8.2f/%8.2f ms   dkernel %8.2f/%8.2f ms\n",
              tag.c_str(), tf_s, tf_o, ti_s, ti_o, tk_s, tk_o);
}

}  // namespace

int main(int argc, char** argv) {
  bool quick = false;
  for (int i = 1; i < argc; ++i)
    if (std::string(argv[i]) == "--quick") quick = true;

  std::printf("kernel backends: OpenMP %s, max threads %d (serial/omp columns)\n",
              kernels::openmp_compiled() ? "compiled" : "unavailable",
              kernels::max_threads());

  Rng rng(4242);
  const int reps = quick ? 2 : 5;

  if (quick) {
    bench_matmul(64, 241, 8, reps, rng);
    bench_matmul(128, 128, 128, reps, rng);
  } else {
    bench_matmul(6272, 241, 8, reps, rng);    // batch-64 filterbank projection
    bench_matmul(512, 512, 512, reps, rng);
    bench_matmul(1024, 1024, 64, reps, rng);
  }

  kernels::Conv2dShape res15;
  res15.batch = quick ? 2 : 16;
  res15.in_ch = 45;
  res15.out_ch = 45;
  res15.height = quick ? 32 : 98;
  res15.width = 8;
  res15.dil_h = 2;
  res15.dil_w = 2;
  bench_conv(res15, reps, rng);

  kernels::Conv2dShape res8;
  res8.batch = quick ? 2 : 16;
  res8.in_ch = 19;
  res8.out_ch = 19;
  res8.height = quick ? 32 : 98;
  res8.width = 8;
  bench_conv(res8, reps, rng);

  if (g_mismatches > 0) {
    std::printf("FAIL: %d kernel output mismatches\n", g_mismatches);
    return 1;
  }
  std::printf("all compared outputs bit-identical\n");
  return 0;
}
