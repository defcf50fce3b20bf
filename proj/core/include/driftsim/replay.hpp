#pragma once

#include <cstddef>
#include <random>
#include <stdexcept>
#include <vector>

namespace driftsim {

/// One transition observed at a decision point.
struct Experience {
  std::vector<double> state;
  int action = 0;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminal = false;
};

/// Fixed-capacity ring buffer with uniform sampling (with replacement).
/// Once full, each push overwrites the oldest entry.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) {
      throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    }
    data_.reserve(std::min<std::size_t>(capacity_, 4096));
  }

  void push(Experience e) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(e));
    } else {
      data_[next_] = std::move(e);
    }
    next_ = (next_ + 1) % capacity_;
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return data_.empty(); }

  const Experience& at(std::size_t i) const { return data_.at(i); }

  std::vector<const Experience*> sample(std::size_t batch,
                                        std::mt19937_64& rng) const {
    if (data_.empty()) {
      throw std::logic_error("ReplayBuffer::sample: buffer is empty");
    }
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    std::vector<const Experience*> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      out.push_back(&data_[pick(rng)]);
    }
    return out;
  }

  void clear() {
    data_.clear();
    next_ = 0;
  }

 private:
  std::vector<Experience> data_;
  std::size_t capacity_;
  std::size_t next_ = 0;
};

}  // namespace driftsim
