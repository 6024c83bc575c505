#pragma once

#include <cstddef>
#include <deque>

#include "nagpipe/numerics.hpp"

namespace nagpipe {

/// g' = g + lambda * (g ⊙ g) ⊙ dw, the diagonal-Fisher Taylor correction of a
/// stale gradient g toward weights that have since moved by dw.
DenseVector second_order_forecast(const DenseVector& g_stale, const DenseVector& dw,
                                  double lambda);

/// The last `capacity` gradients with their step indices, oldest first.
class GradientHistory {
 public:
  struct Entry {
    long step;
    DenseVector gradient;
  };

  explicit GradientHistory(std::size_t capacity);

  // Steps must be strictly increasing; the oldest entry is evicted when full.
  void push(long step, DenseVector gradient);

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  const Entry& newest() const { return entries_.back(); }

 private:
  std::size_t capacity_;
  std::deque<Entry> entries_;
};

struct ForecastResult {
  DenseVector gradient;
  // True when there was too little history and `gradient` is just the newest entry.
  bool fallback = false;
};

/// Per coordinate: least-squares quadratic in the step index, extrapolated
/// `horizon` steps past the newest entry, plus the fit residual continued
/// periodically by Fourier synthesis over all frequency bins. Needs >= 3 entries.
ForecastResult poly_fft_forecast(const GradientHistory& history, std::size_t horizon);

namespace serial {
ForecastResult poly_fft_forecast(const GradientHistory& history, std::size_t horizon);
}

}  // namespace nagpipe
