#include "datorus/cache.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace datorus {

namespace {

// FIPS 180-4 SHA-256
struct Sha256 {
  std::uint32_t h[8] = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                        0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
  std::uint64_t total = 0;
  std::uint8_t buf[64];
  std::size_t fill = 0;

  static constexpr std::uint32_t k[64] = {
      0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1,
      0x923f82a4, 0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3,
      0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786,
      0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
      0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147,
      0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13,
      0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
      0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
      0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a,
      0x5b9cca4f, 0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208,
      0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};

  static std::uint32_t rotr(std::uint32_t x, int n) {
    return (x >> n) | (x << (32 - n));
  }

  void block(const std::uint8_t* p) {
    std::uint32_t w[64];
    for (int i = 0; i < 16; ++i)
      w[i] = (std::uint32_t(p[4 * i]) << 24) | (std::uint32_t(p[4 * i + 1]) << 16) |
             (std::uint32_t(p[4 * i + 2]) << 8) | std::uint32_t(p[4 * i + 3]);
    for (int i = 16; i < 64; ++i) {
      std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4], f = h[5],
                  g = h[6], hh = h[7];
    for (int i = 0; i < 64; ++i) {
      std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      std::uint32_t ch = (e & f) ^ (~e & g);
      std::uint32_t t1 = hh + s1 + ch + k[i] + w[i];
      std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      std::uint32_t t2 = s0 + maj;
      hh = g; g = f; f = e; e = d + t1; d = c; c = b; b = a; a = t1 + t2;
    }
    h[0] += a; h[1] += b; h[2] += c; h[3] += d;
    h[4] += e; h[5] += f; h[6] += g; h[7] += hh;
  }

  void update(const std::uint8_t* p, std::size_t len) {
    total += len;
    while (len > 0) {
      std::size_t take = std::min<std::size_t>(64 - fill, len);
      std::memcpy(buf + fill, p, take);
      fill += take;
      p += take;
      len -= take;
      if (fill == 64) {
        block(buf);
        fill = 0;
      }
    }
  }

  std::array<std::uint8_t, 32> finish() {
    std::uint64_t bits = total * 8;
    std::uint8_t pad = 0x80;
    update(&pad, 1);
    std::uint8_t zero = 0;
    while (fill != 56) update(&zero, 1);
    std::uint8_t lenb[8];
    for (int i = 0; i < 8; ++i) lenb[i] = std::uint8_t(bits >> (56 - 8 * i));
    update(lenb, 8);
    std::array<std::uint8_t, 32> out;
    for (int i = 0; i < 8; ++i) {
      out[4 * i] = std::uint8_t(h[i] >> 24);
      out[4 * i + 1] = std::uint8_t(h[i] >> 16);
      out[4 * i + 2] = std::uint8_t(h[i] >> 8);
      out[4 * i + 3] = std::uint8_t(h[i]);
    }
    return out;
  }
};

constexpr std::uint32_t Sha256::k[64];

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(char(v >> (8 * i)));
}

void put_u64(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(char(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

}  // namespace

std::array<std::uint8_t, 32> sha256(const void* data, std::size_t len) {
  Sha256 s;
  s.update(static_cast<const std::uint8_t*>(data), len);
  return s.finish();
}

std::array<std::uint8_t, 32> sha256(const std::string& s) {
  return sha256(s.data(), s.size());
}

std::string hex_digest(const std::array<std::uint8_t, 32>& d) {
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (auto b : d) {
    out.push_back(hex[b >> 4]);
    out.push_back(hex[b & 15]);
  }
  return out;
}

void write_grid_cache(const std::string& path, const GridCache& cache) {
  std::string payload;
  payload.reserve(60 + 8 * cache.data.size());
  payload.append(kCacheMagic, 8);
  put_u32(payload, kCacheVersion);
  put_u32(payload, static_cast<std::uint32_t>(cache.kind));
  payload.append(reinterpret_cast<const char*>(cache.fingerprint.data()), 32);
  for (int i = 0; i < 3; ++i) put_u32(payload, cache.dims[i]);
  for (double v : cache.data) put_u64(payload, std::bit_cast<std::uint64_t>(v));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open cache file for writing: " + path);
  f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

GridCache read_grid_cache(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CorruptCache("cache file missing: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 60) throw CorruptCache("cache file truncated header");
  const std::uint8_t* p = reinterpret_cast<const std::uint8_t*>(bytes.data());
  if (std::memcmp(p, kCacheMagic, 8) != 0)
    throw CorruptCache("cache magic mismatch");
  std::uint32_t version = get_u32(p + 8);
  if (version != kCacheVersion)
    throw CorruptCache("cache version " + std::to_string(version) +
                       " unsupported (expected " + std::to_string(kCacheVersion) + ")");
  GridCache out;
  out.kind = static_cast<CachePayload>(get_u32(p + 12));
  std::memcpy(out.fingerprint.data(), p + 16, 32);
  for (int i = 0; i < 3; ++i) out.dims[i] = get_u32(p + 48 + 4 * i);
  std::size_t n = bytes.size() - 60;
  if (n % 8 != 0) throw CorruptCache("cache payload not a whole number of doubles");
  out.data.resize(n / 8);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b)
      v |= std::uint64_t(p[60 + 8 * i + b]) << (8 * b);
    out.data[i] = std::bit_cast<double>(v);
  }
  return out;
}

}  // namespace datorus
