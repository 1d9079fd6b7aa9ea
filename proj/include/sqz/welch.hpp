#pragma once
#include <cmath>
#include <complex>
#include <cstring>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "sqz/errors.hpp"
#include "sqz/units.hpp"

// Welch spectral estimation: Hann-windowed overlapping segments averaged into
// a one-sided power spectral density in units of power per Hz. A unit-variance
// white sequence at sample rate fs comes out flat at 2/fs.

namespace sqz {

namespace detail {
inline size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}
}  // namespace detail

struct WelchConfig {
  size_t segment_length = 4096;  // power of two
  double sample_rate_hz = 1.0;
  double overlap = 0.5;  // fraction of a segment shared with its neighbor

  void validate() const {
    if (segment_length < 8 || (segment_length & (segment_length - 1)) != 0)
      throw config_error("welch: segment length must be a power of two >= 8");
    if (sample_rate_hz <= 0) throw config_error("welch: sample rate must be > 0");
    if (overlap < 0 || overlap > 0.9) throw config_error("welch: overlap must be in [0, 0.9]");
  }

  // effective noise bandwidth of one Hann bin
  double enbw_hz() const { return 1.5 * sample_rate_hz / static_cast<double>(segment_length); }

  // smallest power-of-two segment whose Hann bin bandwidth is at most rbw
  static WelchConfig for_rbw(double sample_rate_hz, double rbw_hz, double overlap = 0.5) {
    if (rbw_hz <= 0) throw config_error("welch: resolution bandwidth must be > 0");
    const auto need = static_cast<size_t>(std::ceil(1.5 * sample_rate_hz / rbw_hz));
    WelchConfig cfg;
    cfg.segment_length = std::max<size_t>(8, detail::next_pow2(need));
    cfg.sample_rate_hz = sample_rate_hz;
    cfg.overlap = overlap;
    return cfg;
  }
};

struct PsdEstimate {
  std::vector<double> freq_hz;  // one-sided, DC through Nyquist
  std::vector<double> psd;      // power per Hz
  size_t segments = 0;
};

class WelchAccumulator {
 public:
  explicit WelchAccumulator(const WelchConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const size_t n = cfg_.segment_length;
    hop_ = n - static_cast<size_t>(std::round(cfg_.overlap * static_cast<double>(n)));
    if (hop_ == 0) hop_ = 1;
    window_.resize(n);
    double sumsq = 0;
    for (size_t i = 0; i < n; ++i) {
      window_[i] = 0.5 * (1.0 - std::cos(2.0 * pi * static_cast<double>(i) / static_cast<double>(n)));
      sumsq += window_[i] * window_[i];
    }
    norm_ = 1.0 / (cfg_.sample_rate_hz * sumsq);
    buf_.resize(n);
    scratch_.resize(n);
    accum_.assign(n / 2 + 1, 0.0);
    fft_.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  }

  void push(const double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) {
      buf_[filled_++] = x[i];
      if (filled_ == buf_.size()) {
        process_segment();
        std::memmove(buf_.data(), buf_.data() + hop_, (buf_.size() - hop_) * sizeof(double));
        filled_ -= hop_;
      }
    }
  }

  void push(const std::vector<double>& x) { push(x.data(), x.size()); }

  size_t segments() const { return count_; }

  PsdEstimate estimate() const {
    if (count_ == 0) throw data_error("welch: not enough samples for one segment");
    const size_t n = cfg_.segment_length;
    PsdEstimate e;
    e.segments = count_;
    e.freq_hz.resize(n / 2 + 1);
    e.psd.resize(n / 2 + 1);
    for (size_t k = 0; k <= n / 2; ++k) {
      e.freq_hz[k] = static_cast<double>(k) * cfg_.sample_rate_hz / static_cast<double>(n);
      const double two_sided = accum_[k] / static_cast<double>(count_);
      const bool interior = k != 0 && k != n / 2;
      e.psd[k] = interior ? 2.0 * two_sided : two_sided;
    }
    return e;
  }

 private:
  void process_segment() {
    const size_t n = buf_.size();
    for (size_t i = 0; i < n; ++i) scratch_[i] = buf_[i] * window_[i];
    fft_.fwd(spectrum_, scratch_);
    for (size_t k = 0; k < accum_.size(); ++k) accum_[k] += std::norm(spectrum_[k]) * norm_;
    ++count_;
  }

  WelchConfig cfg_;
  std::vector<double> window_;
  double norm_ = 1.0;
  size_t hop_ = 1;
  std::vector<double> buf_;
  std::vector<double> scratch_;
  std::vector<std::complex<double>> spectrum_;
  std::vector<double> accum_;
  size_t filled_ = 0;
  size_t count_ = 0;
  Eigen::FFT<double> fft_;
};

inline PsdEstimate welch_psd(const std::vector<double>& x, const WelchConfig& cfg) {
  WelchAccumulator acc(cfg);
  acc.push(x);
  return acc.estimate();
}

// Mean of the PSD bins whose centers fall inside [f_lo, f_hi].
inline double band_average(const PsdEstimate& e, double f_lo, double f_hi) {
  double sum = 0;
  size_t count = 0;
  for (size_t i = 0; i < e.freq_hz.size(); ++i) {
    if (e.freq_hz[i] < f_lo || e.freq_hz[i] > f_hi) continue;
    sum += e.psd[i];
    ++count;
  }
  if (count == 0) throw data_error("band_average: no bins in the requested band");
  return sum / static_cast<double>(count);
}

}  // namespace sqz
