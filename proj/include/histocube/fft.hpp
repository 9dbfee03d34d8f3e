#ifndef HISTOCUBE_FFT_HPP
#define HISTOCUBE_FFT_HPP

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <new>
#include <span>
#include <stdexcept>

#include "histocube/grid.hpp"

namespace histocube {

namespace detail {

// FFTW's planner is not thread-safe; execution on fresh arrays is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};

template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <typename T>
FftwBuffer<T> fftw_alloc(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
  if (p == nullptr) throw std::bad_alloc{};
  return FftwBuffer<T>{p};
}

struct PlanDeleter {
  void operator()(fftw_plan p) const noexcept {
    const std::lock_guard lock{fftw_planner_mutex()};
    fftw_destroy_plan(p);
  }
};

using Plan = std::unique_ptr<std::remove_pointer_t<fftw_plan>, PlanDeleter>;

}  // namespace detail

/// Cyclic 2D convolution with a fixed real kernel over Z_W x Z_H.
/**
 * The kernel spectrum is transformed once at construction and reused for
 * every call, so filtering |Y| levels costs |Y| forward/inverse pairs.
 * `convolve` may be called concurrently from several threads.
 */
class CyclicConvolver {
 public:
  CyclicConvolver(const Grid& grid, std::span<const double> kernel)
      : grid_{grid}, spectrum_size_{static_cast<std::size_t>(grid.height()) * (grid.width() / 2 + 1)} {
    if (kernel.size() != grid.size()) {
      throw std::invalid_argument("kernel size does not match grid");
    }
    auto in = detail::fftw_alloc<double>(grid.size());
    spectrum_ = detail::fftw_alloc<fftw_complex>(spectrum_size_);
    {
      const std::lock_guard lock{detail::fftw_planner_mutex()};
      forward_.reset(fftw_plan_dft_r2c_2d(grid.height(), grid.width(), in.get(), spectrum_.get(), FFTW_ESTIMATE));
      inverse_.reset(fftw_plan_dft_c2r_2d(grid.height(), grid.width(), spectrum_.get(), in.get(), FFTW_ESTIMATE));
    }
    if (!forward_ || !inverse_) throw std::runtime_error("FFTW planning failed");
    std::copy(kernel.begin(), kernel.end(), in.get());
    fftw_execute_dft_r2c(forward_.get(), in.get(), spectrum_.get());
  }

  /// out = kernel * in (cyclic convolution); out may alias in.
  void convolve(std::span<const double> in, std::span<double> out) const {
    if (in.size() != grid_.size() || out.size() != grid_.size()) {
      throw std::invalid_argument("convolution buffers do not match grid");
    }
    auto real = detail::fftw_alloc<double>(grid_.size());
    auto freq = detail::fftw_alloc<fftw_complex>(spectrum_size_);
    std::copy(in.begin(), in.end(), real.get());
    fftw_execute_dft_r2c(forward_.get(), real.get(), freq.get());
    for (std::size_t i = 0; i < spectrum_size_; ++i) {
      const double a = freq[i][0];
      const double b = freq[i][1];
      const double c = spectrum_[i][0];
      const double d = spectrum_[i][1];
      freq[i][0] = a * c - b * d;
      freq[i][1] = a * d + b * c;
    }
    fftw_execute_dft_c2r(inverse_.get(), freq.get(), real.get());
    const double scale = 1.0 / static_cast<double>(grid_.size());
    for (std::size_t i = 0; i < grid_.size(); ++i) out[i] = real[i] * scale;
  }

  [[nodiscard]] const Grid& grid() const noexcept { return grid_; }

 private:
  Grid grid_;
  std::size_t spectrum_size_;
  detail::FftwBuffer<fftw_complex> spectrum_;
  detail::Plan forward_;
  detail::Plan inverse_;
};

}  // namespace histocube

#endif  // HISTOCUBE_FFT_HPP
