#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <future>
#include <list>
#include <memory>
#include <mutex>
#include <unordered_map>

#include "subm/errors.hpp"
#include "subm/model.hpp"

namespace subm {

/// Log-scale histogram of cold-load latencies in microseconds.
struct MicrosHistogram {
  std::array<uint64_t, 24> buckets{};  // bucket i: [2^i, 2^(i+1)) us
  uint64_t count = 0;
  double sum = 0.0, sum_sq = 0.0;

  void record(uint64_t micros) {
    size_t b = 0;
    while ((1ull << (b + 1)) <= micros && b + 1 < buckets.size()) ++b;
    buckets[b]++;
    count++;
    sum += static_cast<double>(micros);
    sum_sq += static_cast<double>(micros) * static_cast<double>(micros);
  }

  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
  double stdev() const {
    if (count < 2) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, sum_sq / static_cast<double>(count) - m * m));
  }
};

struct CacheStats {
  uint64_t hits = 0;
  uint64_t misses = 0;
  uint64_t evictions = 0;
  MicrosHistogram cold_load_micros;
};

struct LoadInfo {
  bool hit = false;
  uint64_t load_micros = 0;  // 0 on a hit
};

/// LRU cache over loaded submodels keyed by speaker id. Concurrent misses on
/// one key perform a single load (single-flight); everyone else waits on the
/// in-flight future. Resident count never exceeds capacity.
class SubmodelCache {
 public:
  using Loader = std::function<std::shared_ptr<const Submodel>(uint64_t)>;

  explicit SubmodelCache(size_t capacity) : capacity_(capacity) {
    require(capacity >= 1, ErrCode::precondition, "cache capacity must be >= 1");
  }

  std::pair<std::shared_ptr<const Submodel>, LoadInfo> get_or_load(uint64_t speaker,
                                                                   const Loader& loader) {
    std::shared_future<std::shared_ptr<const Submodel>> flight;
    std::promise<std::shared_ptr<const Submodel>> promise;
    bool leader = false;
    {
      std::unique_lock lock(mu_);
      auto it = entries_.find(speaker);
      if (it != entries_.end()) {
        lru_.splice(lru_.begin(), lru_, it->second.lru_it);
        stats_.hits++;
        return {it->second.value, LoadInfo{true, 0}};
      }
      stats_.misses++;
      auto in = inflight_.find(speaker);
      if (in != inflight_.end()) {
        flight = in->second;
      } else {
        leader = true;
        flight = promise.get_future().share();
        inflight_.emplace(speaker, flight);
      }
    }

    if (!leader) {
      const auto t0 = std::chrono::steady_clock::now();
      auto value = flight.get();  // rethrows the leader's failure
      const auto us = std::chrono::duration_cast<std::chrono::microseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
      return {value, LoadInfo{false, static_cast<uint64_t>(us)}};
    }

    std::shared_ptr<const Submodel> value;
    uint64_t micros = 0;
    try {
      const auto t0 = std::chrono::steady_clock::now();
      value = loader(speaker);
      micros = static_cast<uint64_t>(std::chrono::duration_cast<std::chrono::microseconds>(
                                         std::chrono::steady_clock::now() - t0)
                                         .count());
    } catch (...) {
      std::unique_lock lock(mu_);
      inflight_.erase(speaker);
      promise.set_exception(std::current_exception());
      throw;
    }
    {
      std::unique_lock lock(mu_);
      inflight_.erase(speaker);
      lru_.push_front(speaker);
      entries_[speaker] = Entry{value, lru_.begin()};
      stats_.cold_load_micros.record(micros);
      while (entries_.size() > capacity_) {
        const uint64_t victim = lru_.back();
        lru_.pop_back();
        entries_.erase(victim);
        stats_.evictions++;
      }
    }
    promise.set_value(value);
    return {value, LoadInfo{false, micros}};
  }

  bool evict(uint64_t speaker) {
    std::unique_lock lock(mu_);
    auto it = entries_.find(speaker);
    if (it == entries_.end()) return false;
    lru_.erase(it->second.lru_it);
    entries_.erase(it);
    stats_.evictions++;
    return true;
  }

  size_t resident() const {
    std::unique_lock lock(mu_);
    return entries_.size();
  }

  CacheStats stats() const {
    std::unique_lock lock(mu_);
    return stats_;
  }

  size_t capacity() const { return capacity_; }

  /// Least-recently-used first (for tests).
  std::vector<uint64_t> lru_order() const {
    std::unique_lock lock(mu_);
    return {lru_.rbegin(), lru_.rend()};
  }

 private:
  struct Entry {
    std::shared_ptr<const Submodel> value;
    std::list<uint64_t>::iterator lru_it;
  };

  size_t capacity_;
  mutable std::mutex mu_;
  std::list<uint64_t> lru_;  // front = most recently used
  std::unordered_map<uint64_t, Entry> entries_;
  std::unordered_map<uint64_t, std::shared_future<std::shared_ptr<const Submodel>>> inflight_;
  CacheStats stats_;
};

}  // namespace subm
