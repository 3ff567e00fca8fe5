#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "melstream/error.hpp"

namespace melstream {

// Fixed-capacity single-producer/single-consumer FIFO. Positions are
// monotonically increasing counters; the slot for position p is p % capacity.
// write() may run on one thread while read()/peek()/discard() run on another.
template <typename T>
class RingBuffer {
 public:
  explicit RingBuffer(std::size_t capacity) : storage_(capacity) {
    if (capacity == 0) throw Error(ErrorCode::InvalidConfig, "ring buffer capacity must be positive");
  }

  RingBuffer(const RingBuffer&) = delete;
  RingBuffer& operator=(const RingBuffer&) = delete;

  RingBuffer(RingBuffer&& other) noexcept
      : storage_(std::move(other.storage_)),
        read_pos_(other.read_pos_.load()),
        write_pos_(other.write_pos_.load()),
        peak_(other.peak_) {}

  std::size_t capacity() const { return storage_.size(); }
  std::uint64_t read_pos() const { return read_pos_.load(std::memory_order_acquire); }
  std::uint64_t write_pos() const { return write_pos_.load(std::memory_order_acquire); }

  std::size_t size() const { return static_cast<std::size_t>(write_pos() - read_pos()); }
  std::size_t free_space() const { return capacity() - size(); }

  // Highest occupancy observed by the producer.
  std::size_t peak_size() const { return peak_; }

  // Producer side. Writes as much as fits and returns the count written.
  std::size_t write(std::span<const T> values) {
    const std::uint64_t w = write_pos_.load(std::memory_order_relaxed);
    const std::uint64_t r = read_pos_.load(std::memory_order_acquire);
    const std::size_t room = capacity() - static_cast<std::size_t>(w - r);
    const std::size_t n = std::min(room, values.size());
    copy_in(w, values.first(n));
    write_pos_.store(w + n, std::memory_order_release);
    peak_ = std::max(peak_, static_cast<std::size_t>(w + n - r));
    return n;
  }

  // All-or-nothing write; BufferOverflow if the values do not fit.
  void write_all(std::span<const T> values) {
    if (values.size() > free_space()) {
      throw Error(ErrorCode::BufferOverflow, "ring buffer full (capacity " +
                                                 std::to_string(capacity()) + ")");
    }
    write(values);
  }

  // Consumer side. Copies out.size() values starting `offset` past the read
  // position without consuming them; returns false if not yet available.
  bool peek(std::size_t offset, std::span<T> out) const {
    const std::uint64_t r = read_pos_.load(std::memory_order_relaxed);
    const std::uint64_t w = write_pos_.load(std::memory_order_acquire);
    if (w - r < offset + out.size()) return false;
    copy_out(r + offset, out);
    return true;
  }

  std::size_t read(std::span<T> out) {
    const std::uint64_t r = read_pos_.load(std::memory_order_relaxed);
    const std::uint64_t w = write_pos_.load(std::memory_order_acquire);
    const std::size_t n = std::min(out.size(), static_cast<std::size_t>(w - r));
    copy_out(r, out.first(n));
    read_pos_.store(r + n, std::memory_order_release);
    return n;
  }

  std::size_t discard(std::size_t n) {
    const std::uint64_t r = read_pos_.load(std::memory_order_relaxed);
    const std::uint64_t w = write_pos_.load(std::memory_order_acquire);
    n = std::min(n, static_cast<std::size_t>(w - r));
    read_pos_.store(r + n, std::memory_order_release);
    return n;
  }

 private:
  void copy_in(std::uint64_t pos, std::span<const T> values) {
    const std::size_t cap = capacity();
    const auto start = static_cast<std::size_t>(pos % cap);
    const std::size_t first = std::min(values.size(), cap - start);
    std::copy_n(values.begin(), first, storage_.begin() + static_cast<std::ptrdiff_t>(start));
    std::copy(values.begin() + static_cast<std::ptrdiff_t>(first), values.end(), storage_.begin());
  }

  void copy_out(std::uint64_t pos, std::span<T> out) const {
    const std::size_t cap = capacity();
    const auto start = static_cast<std::size_t>(pos % cap);
    const std::size_t first = std::min(out.size(), cap - start);
    std::copy_n(storage_.begin() + static_cast<std::ptrdiff_t>(start), first, out.begin());
    std::copy_n(storage_.begin(), out.size() - first, out.begin() + static_cast<std::ptrdiff_t>(first));
  }

  std::vector<T> storage_;
  std::atomic<std::uint64_t> read_pos_{0};
  std::atomic<std::uint64_t> write_pos_{0};
  std::size_t peak_ = 0;
};

}  // namespace melstream
