#include "vfc/cache.hpp"

#include <spdlog/spdlog.h>

#include "vfc/error.hpp"
#include "vfc/util.hpp"

namespace vfc {

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) fail(ErrorCode::io_error, "cache directory not writable: " + dir_.string());
  }
}

std::filesystem::path ResponseCache::entry_path(const CacheKey& key) const {
  return dir_ / key.digest.substr(0, 2) / (key.digest + ".json");
}

std::mutex& ResponseCache::key_mutex(const std::string& digest) {
  std::lock_guard lock(map_mutex_);
  auto& slot = key_mutexes_[digest];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

std::optional<std::string> ResponseCache::load_locked(const CacheKey& key) {
  if (dir_.empty()) {
    std::lock_guard lock(map_mutex_);
    auto it = memory_.find(key.digest);
    if (it == memory_.end()) return std::nullopt;
    return it->second;
  }
  auto path = entry_path(key);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    auto entry = json::parse(read_file(path));
    auto body = entry.at("body").get<std::string>();
    if (entry.at("key").get<std::string>() != key.digest ||
        entry.at("sha256").get<std::string>() != sha256_hex(body))
      throw Error(ErrorCode::cache_corrupt, "checksum mismatch");
    return body;
  } catch (const std::exception& ex) {
    spdlog::warn("CacheCorrupt({}): {}; evicting", key.digest, ex.what());
    ++corrupt_;
    std::filesystem::remove(path, ec);
    return std::nullopt;
  }
}

std::optional<std::string> ResponseCache::lookup(const CacheKey& key) {
  std::lock_guard lock(key_mutex(key.digest));
  return load_locked(key);
}

void ResponseCache::store(const CacheKey& key, const std::string& body) {
  if (dir_.empty()) {
    std::lock_guard lock(map_mutex_);
    memory_[key.digest] = body;
    return;
  }
  json entry{{"key", key.digest}, {"sha256", sha256_hex(body)}, {"body", body}};
  write_file_atomic(entry_path(key), entry.dump());
}

std::string ResponseCache::cached_call(const CacheKey& key,
                                       const std::function<std::string()>& thunk) {
  std::lock_guard lock(key_mutex(key.digest));
  if (auto hit = load_locked(key)) {
    ++hits_;
    return *hit;
  }
  ++misses_;
  std::string body = thunk();
  store(key, body);
  return body;
}

ResponseCache::Stats ResponseCache::stats() const {
  return {hits_.load(), misses_.load(), corrupt_.load()};
}

}  // namespace vfc
