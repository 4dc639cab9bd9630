#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <zlib.h>

namespace streamgrid {

// ---------------------------------------------------------------------------
// Deterministic RNG (PCG32). std::uniform_* distributions are
// implementation-defined, so all randomness goes through this.
// ---------------------------------------------------------------------------
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t seq = 0x14057b7ef767814fULL) {
    state_ = 0;
    inc_ = (seq << 1) | 1u;
    next_u32();
    state_ += seed;
    next_u32();
  }

  std::uint32_t next_u32() {
    std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18) ^ old) >> 27);
    std::uint32_t rot = static_cast<std::uint32_t>(old >> 59);
    return (xorshifted >> rot) | (xorshifted << ((32 - rot) & 31));
  }

  // [0, 1)
  double uniform() { return next_u32() * (1.0 / 4294967296.0); }
  float uniform_f() { return static_cast<float>(next_u32() >> 8) * (1.0f / 16777216.0f); }

  // [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  float uniform_f(float lo, float hi) { return lo + (hi - lo) * uniform_f(); }

  // [0, n), unbiased enough for test/batch sampling
  std::uint32_t below(std::uint32_t n) {
    return static_cast<std::uint32_t>((static_cast<std::uint64_t>(next_u32()) * n) >> 32);
  }

  bool coin(double p = 0.5) { return uniform() < p; }

 private:
  std::uint64_t state_;
  std::uint64_t inc_;
};

// ---------------------------------------------------------------------------
// Contiguous-chunk parallel for. Chunk boundaries depend only on (n, threads),
// so any reduction done in thread order is deterministic for a fixed thread
// count.
// ---------------------------------------------------------------------------
inline int default_threads() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (n == 0) return;
  std::size_t t = threads < 1 ? 1 : static_cast<std::size_t>(threads);
  t = std::min<std::size_t>(t, n);
  if (t <= 1) {
    fn(std::size_t{0}, n, 0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(t);
  std::size_t chunk = (n + t - 1) / t;
  for (std::size_t i = 0; i < t; ++i) {
    std::size_t begin = i * chunk;
    std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end, i] { fn(begin, end, static_cast<int>(i)); });
  }
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// IEEE-754 binary16 conversion, round-to-nearest-even.
// ---------------------------------------------------------------------------
inline std::uint16_t float_to_half(float value) {
  std::uint32_t f = std::bit_cast<std::uint32_t>(value);
  std::uint32_t sign = (f >> 16) & 0x8000u;
  std::uint32_t exp_f = (f >> 23) & 0xFFu;
  std::uint32_t mant = f & 0x007FFFFFu;
  if (exp_f == 0xFFu) {  // inf / nan
    return static_cast<std::uint16_t>(sign | 0x7C00u | (mant ? 0x0200u : 0u));
  }
  int exp_h = static_cast<int>(exp_f) - 127 + 15;
  if (exp_h >= 0x1F) return static_cast<std::uint16_t>(sign | 0x7C00u);  // overflow -> inf
  if (exp_h <= 0) {
    if (exp_h < -10) return static_cast<std::uint16_t>(sign);  // underflow -> signed zero
    mant |= 0x00800000u;
    std::uint32_t shift = static_cast<std::uint32_t>(14 - exp_h);
    std::uint32_t half_mant = mant >> shift;
    std::uint32_t rem = mant & ((1u << shift) - 1u);
    std::uint32_t halfway = 1u << (shift - 1u);
    if (rem > halfway || (rem == halfway && (half_mant & 1u))) half_mant++;
    return static_cast<std::uint16_t>(sign | half_mant);  // carry may bump exponent; that is correct
  }
  std::uint32_t half_mant = mant >> 13;
  std::uint32_t rem = mant & 0x1FFFu;
  if (rem > 0x1000u || (rem == 0x1000u && (half_mant & 1u))) {
    half_mant++;
    if (half_mant == 0x400u) {
      half_mant = 0;
      if (++exp_h >= 0x1F) return static_cast<std::uint16_t>(sign | 0x7C00u);
    }
  }
  return static_cast<std::uint16_t>(sign | (static_cast<std::uint32_t>(exp_h) << 10) | half_mant);
}

inline float half_to_float(std::uint16_t h) {
  std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  std::uint32_t exp = (h >> 10) & 0x1Fu;
  std::uint32_t mant = h & 0x3FFu;
  std::uint32_t f;
  if (exp == 0) {
    if (mant == 0) {
      f = sign;
    } else {
      int e = 0;
      while (!(mant & 0x400u)) {
        mant <<= 1;
        ++e;
      }
      mant &= 0x3FFu;
      f = sign | (static_cast<std::uint32_t>(112 - e) << 23) | (mant << 13);
    }
  } else if (exp == 0x1Fu) {
    f = sign | 0x7F800000u | (mant << 13);
  } else {
    f = sign | ((exp + 112u) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(f);
}

// ---------------------------------------------------------------------------
// Little-endian byte stream helpers.
// ---------------------------------------------------------------------------
class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { buf_.push_back(v); }
  void put_u16(std::uint16_t v) {
    buf_.push_back(static_cast<std::uint8_t>(v));
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void put_u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }
  void put_bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void put_magic(const char m[4]) { put_bytes(m, 4); }

  const std::vector<std::uint8_t>& bytes() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t get_u8() { return data_[need(1)]; }
  std::uint16_t get_u16() {
    std::size_t o = need(2);
    return static_cast<std::uint16_t>(data_[o] | (data_[o + 1] << 8));
  }
  std::uint32_t get_u32() {
    std::size_t o = need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[o + i]) << (8 * i);
    return v;
  }
  float get_f32() { return std::bit_cast<float>(get_u32()); }
  void get_bytes(void* p, std::size_t n) {
    std::size_t o = need(n);
    std::memcpy(p, data_.data() + o, n);
  }
  bool expect_magic(const char m[4]) {
    char got[4];
    get_bytes(got, 4);
    return std::memcmp(got, m, 4) == 0;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::size_t need(std::size_t n) {
    if (pos_ + n > data_.size()) throw std::runtime_error("byte stream truncated");
    std::size_t o = pos_;
    pos_ += n;
    return o;
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// DEFLATE (zlib stream) wrappers.
// ---------------------------------------------------------------------------
inline std::vector<std::uint8_t> zlib_compress(std::span<const std::uint8_t> src, int level = 9) {
  uLongf bound = compressBound(static_cast<uLong>(src.size()));
  std::vector<std::uint8_t> out(bound);
  int rc = compress2(out.data(), &bound, src.data(), static_cast<uLong>(src.size()), level);
  if (rc != Z_OK) throw std::runtime_error("zlib compress failed: " + std::to_string(rc));
  out.resize(bound);
  return out;
}

inline std::vector<std::uint8_t> zlib_decompress(std::span<const std::uint8_t> src) {
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw std::runtime_error("zlib inflateInit failed");
  std::vector<std::uint8_t> out;
  out.resize(std::max<std::size_t>(src.size() * 4, 4096));
  zs.next_in = const_cast<Bytef*>(src.data());
  zs.avail_in = static_cast<uInt>(src.size());
  std::size_t written = 0;
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    if (written == out.size()) out.resize(out.size() * 2);
    zs.next_out = out.data() + written;
    zs.avail_out = static_cast<uInt>(out.size() - written);
    rc = inflate(&zs, Z_NO_FLUSH);
    written = out.size() - zs.avail_out;
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw std::runtime_error("zlib inflate failed: " + std::to_string(rc));
    }
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out > 0) {
      inflateEnd(&zs);
      throw std::runtime_error("zlib stream truncated");
    }
  }
  inflateEnd(&zs);
  out.resize(written);
  return out;
}

}  // namespace streamgrid
