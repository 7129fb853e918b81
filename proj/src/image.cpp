#include "panostitch/image.hpp"

#include <cstdlib>
#include <numeric>
#include <thread>

#include "panostitch/parallel.hpp"

namespace panostitch {

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

Mask Mask::operator&(const Mask& other) const {
  if (!other.same_grid(height_, width_)) throw DomainError("Mask: size mismatch");
  Mask out(height_, width_);
  for (std::size_t i = 0; i < data_.size(); ++i) out.data_[i] = data_[i] & other.data_[i];
  return out;
}

Mask Mask::operator|(const Mask& other) const {
  if (!other.same_grid(height_, width_)) throw DomainError("Mask: size mismatch");
  Mask out(height_, width_);
  for (std::size_t i = 0; i < data_.size(); ++i) out.data_[i] = data_[i] | other.data_[i];
  return out;
}

int worker_count() {
  if (const char* env = std::getenv("PANOSTITCH_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace panostitch
