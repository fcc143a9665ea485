#include "codedevent/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>
#include <utility>

namespace codedevent {

namespace {

struct PlanPair {
  fftw_plan fwd;
  fftw_plan bwd;
};

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

bool g_reproducible = false;

PlanPair plans_for(int n) {
  static std::map<int, PlanPair> cache;
  std::lock_guard<std::mutex> lock(planner_mutex());
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  Field a(n, n), b(n, n);
  auto* pa = reinterpret_cast<fftw_complex*>(a.data());
  auto* pb = reinterpret_cast<fftw_complex*>(b.data());
  const unsigned flags = (g_reproducible ? FFTW_ESTIMATE : FFTW_MEASURE) | FFTW_UNALIGNED;
  PlanPair p{fftw_plan_dft_2d(n, n, pa, pb, FFTW_FORWARD, flags),
             fftw_plan_dft_2d(n, n, pa, pb, FFTW_BACKWARD, flags)};
  if (p.fwd == nullptr || p.bwd == nullptr) throw std::runtime_error("fftw: plan creation failed");
  cache.emplace(n, p);
  return p;
}

void execute(void* plan, const Field& in, Field& out, int n) {
  if (in.rows() != n || in.cols() != n) throw std::invalid_argument("fft: input shape mismatch");
  out.resize(n, n);
  if (in.data() == out.data()) {
    Field tmp = in;
    fftw_execute_dft(static_cast<fftw_plan>(plan), reinterpret_cast<fftw_complex*>(tmp.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
    return;
  }
  // c2c out-of-place transforms leave the input untouched.
  fftw_execute_dft(static_cast<fftw_plan>(plan),
                   reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in.data())),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

}  // namespace

void set_fft_reproducible(bool reproducible) {
  std::lock_guard<std::mutex> lock(planner_mutex());
  g_reproducible = reproducible;
}

Fft2::Fft2(int n) : n_(n) {
  if (n <= 0) throw std::invalid_argument("fft: size must be positive");
  const PlanPair p = plans_for(n);
  fwd_ = p.fwd;
  bwd_ = p.bwd;
}

void Fft2::forward(const Field& in, Field& out) const { execute(fwd_, in, out, n_); }

void Fft2::backward(const Field& in, Field& out) const { execute(bwd_, in, out, n_); }

}  // namespace codedevent
