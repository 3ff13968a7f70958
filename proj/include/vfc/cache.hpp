#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include "vfc/types.hpp"

namespace vfc {

/// Content-addressed store of raw endpoint responses.
///
/// With a directory, entries live at `<dir>/<digest[0:2]>/<digest>.json` and are written
/// atomically (temp file + rename). Without one, entries are kept in memory. Calls for the
/// same key are serialized, so a concurrent duplicate request waits and then hits.
class ResponseCache {
 public:
  struct Stats {
    std::size_t hits = 0;
    std::size_t misses = 0;
    std::size_t corrupt_evictions = 0;
  };

  explicit ResponseCache(std::filesystem::path dir = {});

  /// On hit returns stored bytes without invoking `thunk`; on miss invokes, stores, returns.
  /// A corrupt entry is evicted and recomputed.
  std::string cached_call(const CacheKey& key, const std::function<std::string()>& thunk);

  std::optional<std::string> lookup(const CacheKey& key);
  void store(const CacheKey& key, const std::string& body);

  Stats stats() const;
  const std::filesystem::path& directory() const noexcept { return dir_; }

 private:
  std::filesystem::path entry_path(const CacheKey& key) const;
  std::optional<std::string> load_locked(const CacheKey& key);
  std::mutex& key_mutex(const std::string& digest);

  std::filesystem::path dir_;
  mutable std::mutex map_mutex_;
  std::unordered_map<std::string, std::unique_ptr<std::mutex>> key_mutexes_;
  std::unordered_map<std::string, std::string> memory_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
  std::atomic<std::size_t> corrupt_{0};
};

}  // namespace vfc
