#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <stdexcept>

namespace datorus {

struct CorruptCache : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::array<std::uint8_t, 32> sha256(const void* data, std::size_t len);
std::array<std::uint8_t, 32> sha256(const std::string& s);
std::string hex_digest(const std::array<std::uint8_t, 32>& d);

inline constexpr char kCacheMagic[9] = "DATORUS1";
inline constexpr std::uint32_t kCacheVersion = 1;

enum class CachePayload : std::uint32_t {
  Displacement = 1,
  Frames = 2,
};

struct GridCache {
  CachePayload kind = CachePayload::Displacement;
  std::array<std::uint8_t, 32> fingerprint{};
  std::array<std::uint32_t, 3> dims{};
  std::vector<double> data;  // 64-bit little-endian, x-fastest node order
};

void write_grid_cache(const std::string& path, const GridCache& cache);
GridCache read_grid_cache(const std::string& path);

}  // namespace datorus
