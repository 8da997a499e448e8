#include <algorithm>
#include <stdexcept>
#include <unordered_set>

#include "gridvc/agents.hpp"

namespace gridvc {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
  data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, Rng& rng) const {
  if (batch > data_.size()) throw std::invalid_argument("batch larger than replay buffer");
  // Floyd's algorithm: batch distinct draws in O(batch).
  std::vector<std::size_t> out;
  out.reserve(batch);
  std::unordered_set<std::size_t> seen;
  const std::size_t n = data_.size();
  for (std::size_t j = n - batch; j < n; ++j) {
    const std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
    if (seen.insert(t).second) {
      out.push_back(t);
    } else {
      seen.insert(j);
      out.push_back(j);
    }
  }
  return out;
}

}  // namespace gridvc
