#ifndef SMOLNN_FFT_CONVOLUTION_HPP_
#define SMOLNN_FFT_CONVOLUTION_HPP_

// Linear convolution of non-negative-lag sequences through zero-padded real FFTs.

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <type_traits>
#include <vector>

#include "smolnn/error.hpp"

namespace smolnn {

namespace detail {

// FFTW's planner is not re-entrant; execution of distinct plans is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};

struct FftwPlanDestroy {
  void operator()(fftw_plan p) const noexcept {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(p);
  }
};

using FftwPlan = std::unique_ptr<std::remove_pointer_t<fftw_plan>, FftwPlanDestroy>;

inline std::size_t next_pow2(std::size_t v) {
  std::size_t p = 1;
  while (p < v) p <<= 1;
  return p;
}

}  // namespace detail

/// Accumulates sums of products of spectra and returns the lags 0..n-1 of the
/// resulting linear convolution. Plans use FFTW_ESTIMATE, so results are
/// reproducible run to run.
class FftConvolver {
 public:
  explicit FftConvolver(std::size_t n)
      : n_(n), len_(detail::next_pow2(2 * std::max<std::size_t>(n, 1))), bins_(len_ / 2 + 1) {
    real_.reset(static_cast<double*>(fftw_malloc(sizeof(double) * len_)));
    spec_.reset(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins_)));
    acc_.reset(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins_)));
    tmp_.reset(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins_)));
    if (!real_ || !spec_ || !acc_ || !tmp_) throw std::bad_alloc();
    std::lock_guard lock(detail::fftw_planner_mutex());
    forward_.reset(fftw_plan_dft_r2c_1d(static_cast<int>(len_), real_.get(), spec_.get(),
                                        FFTW_ESTIMATE));
    inverse_.reset(fftw_plan_dft_c2r_1d(static_cast<int>(len_), acc_.get(), real_.get(),
                                        FFTW_ESTIMATE | FFTW_DESTROY_INPUT));
  }

  FftConvolver(const FftConvolver&) = delete;
  FftConvolver& operator=(const FftConvolver&) = delete;
  FftConvolver(FftConvolver&&) noexcept = default;
  FftConvolver& operator=(FftConvolver&&) noexcept = default;

  std::size_t size() const noexcept { return n_; }
  std::size_t fft_length() const noexcept { return len_; }

  void reset() { std::fill_n(&acc_[0][0], 2 * bins_, 0.0); }

  /// acc += FFT(x) * FFT(y)
  void accumulate(std::span<const double> x, std::span<const double> y) {
    transform(x, spec_.get());
    if (x.data() == y.data() && x.size() == y.size()) {
      for (std::size_t b = 0; b < bins_; ++b) {
        const std::complex<double> s(spec_[b][0], spec_[b][1]);
        const auto p = s * s;
        acc_[b][0] += p.real();
        acc_[b][1] += p.imag();
      }
      return;
    }
    std::copy_n(&spec_[0][0], 2 * bins_, &tmp_[0][0]);
    transform(y, spec_.get());
    for (std::size_t b = 0; b < bins_; ++b) {
      const std::complex<double> s(tmp_[b][0], tmp_[b][1]);
      const std::complex<double> t(spec_[b][0], spec_[b][1]);
      const auto p = s * t;
      acc_[b][0] += p.real();
      acc_[b][1] += p.imag();
    }
  }

  /// Writes lags 0..out.size()-1 of the accumulated convolution.
  void finish(std::span<double> out) {
    if (out.size() > n_) throw ConfigError("FftConvolver: output longer than transform size");
    fftw_execute(inverse_.get());
    const double scale = 1.0 / static_cast<double>(len_);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = real_[i] * scale;
  }

  /// Plain linear convolution, lags 0..out.size()-1.
  void convolve(std::span<const double> x, std::span<const double> y, std::span<double> out) {
    reset();
    accumulate(x, y);
    finish(out);
  }

 private:
  void transform(std::span<const double> x, fftw_complex* dst) {
    if (x.size() > n_) throw ConfigError("FftConvolver: input longer than transform size");
    std::copy(x.begin(), x.end(), real_.get());
    std::fill(real_.get() + x.size(), real_.get() + len_, 0.0);
    fftw_execute_dft_r2c(forward_.get(), real_.get(), dst);
  }

  std::size_t n_;
  std::size_t len_;
  std::size_t bins_;
  std::unique_ptr<double[], detail::FftwFree> real_;
  std::unique_ptr<fftw_complex[], detail::FftwFree> spec_;
  std::unique_ptr<fftw_complex[], detail::FftwFree> acc_;
  std::unique_ptr<fftw_complex[], detail::FftwFree> tmp_;
  detail::FftwPlan forward_;
  detail::FftwPlan inverse_;
};

}  // namespace smolnn

#endif  // SMOLNN_FFT_CONVOLUTION_HPP_
