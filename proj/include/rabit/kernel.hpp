#pragma once

// Bit-packed binary cores and the matmul-free GEMV y = g (.) (B (h (.) x)).
//
// Packing: 32 columns per uint32 word, row-major, bit b of word w holds
// column 32*w + b; +1 -> 0, -1 -> 1; padding bits past `cols` are zero.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "rabit/binarize.hpp"
#include "rabit/csv.hpp"
#include "rabit/error.hpp"
#include "rabit/matrix.hpp"

namespace rabit::kernel {

inline constexpr std::size_t kWordBits = 32;

constexpr std::size_t words_per_row(std::size_t cols) {
  return (cols + kWordBits - 1) / kWordBits;
}

/// Bytes of packed sign bits for one path (scales excluded).
constexpr std::size_t packed_weight_bytes(std::size_t rows, std::size_t cols) {
  return rows * words_per_row(cols) * sizeof(std::uint32_t);
}

/// Mask of the valid bits in the last word of a row.
constexpr std::uint32_t tail_mask(std::size_t cols) {
  const std::size_t rem = cols % kWordBits;
  return rem == 0 ? 0xFFFFFFFFu : ((1u << rem) - 1u);
}

class PackedPath {
 public:
  PackedPath() = default;

  /// Validates word count and the zero-padding invariant.
  PackedPath(std::size_t rows, std::size_t cols, std::vector<std::uint32_t> bits,
             std::vector<float> g, std::vector<float> h)
      : rows_(rows), cols_(cols), bits_(std::move(bits)), g_(std::move(g)),
        h_(std::move(h)) {
    rabit::detail::require_shape(bits_.size() == rows_ * kernel::words_per_row(cols_),
                          "PackedPath: bits length != rows * words_per_row");
    rabit::detail::require_shape(g_.size() == rows_, "PackedPath: g length != rows");
    rabit::detail::require_shape(h_.size() == cols_, "PackedPath: h length != cols");
    if (!padding_clean())
      throw DomainError("PackedPath: padding bits must be zero");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t words_per_row() const noexcept { return kernel::words_per_row(cols_); }
  std::span<const std::uint32_t> bits() const noexcept { return bits_; }
  std::span<const std::uint32_t> row_words(std::size_t r) const {
    return std::span<const std::uint32_t>(bits_).subspan(r * words_per_row(),
                                                         words_per_row());
  }
  std::span<const float> g() const noexcept { return g_; }
  std::span<const float> h() const noexcept { return h_; }

  bool padding_clean() const noexcept {
    const std::size_t wpr = words_per_row();
    if (wpr == 0 || cols_ % kWordBits == 0) return true;
    const std::uint32_t pad = ~tail_mask(cols_);
    for (std::size_t r = 0; r < rows_; ++r)
      if (bits_[r * wpr + wpr - 1] & pad) return false;
    return true;
  }

  friend bool operator==(const PackedPath&, const PackedPath&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint32_t> bits_;
  std::vector<float> g_;
  std::vector<float> h_;
};

/// Pack a {-1,+1} matrix. Throws DomainError on any other entry.
inline std::vector<std::uint32_t> pack_bits(const Matrix& core) {
  const std::size_t wpr = words_per_row(core.cols());
  std::vector<std::uint32_t> bits(core.rows() * wpr, 0u);
  for (std::size_t r = 0; r < core.rows(); ++r) {
    const auto row = core.row(r);
    for (std::size_t c = 0; c < core.cols(); ++c) {
      const double v = row[c];
      if (v == -1.0)
        bits[r * wpr + c / kWordBits] |= 1u << (c % kWordBits);
      else if (v != 1.0)
        throw DomainError("pack: core entries must be exactly +1 or -1");
    }
  }
  return bits;
}

inline PackedPath pack(const BinaryPath& p) {
  std::vector<float> g(p.g().data().begin(), p.g().data().end());
  std::vector<float> h(p.h().data().begin(), p.h().data().end());
  return PackedPath(p.rows(), p.cols(), pack_bits(p.core()), std::move(g),
                    std::move(h));
}

inline Matrix unpack(const PackedPath& p) {
  Matrix core(p.rows(), p.cols());
  for (std::size_t r = 0; r < p.rows(); ++r) {
    const auto words = p.row_words(r);
    for (std::size_t c = 0; c < p.cols(); ++c)
      core(r, c) = (words[c / kWordBits] >> (c % kWordBits)) & 1u ? -1.0 : 1.0;
  }
  return core;
}

class PackedStack {
 public:
  PackedStack() = default;

  explicit PackedStack(std::vector<PackedPath> paths) : paths_(std::move(paths)) {
    if (paths_.empty()) throw DomainError("PackedStack: k must be >= 1");
    for (const auto& p : paths_)
      rabit::detail::require_shape(p.rows() == rows() && p.cols() == cols(),
                            "PackedStack: path dimensions differ");
  }

  std::size_t k() const noexcept { return paths_.size(); }
  std::size_t rows() const noexcept { return paths_.front().rows(); }
  std::size_t cols() const noexcept { return paths_.front().cols(); }
  const std::vector<PackedPath>& paths() const noexcept { return paths_; }
  const PackedPath& path(std::size_t i) const { return paths_.at(i); }

  friend bool operator==(const PackedStack&, const PackedStack&) = default;

 private:
  std::vector<PackedPath> paths_;
};

inline PackedStack pack(const ResidualStack& s) {
  std::vector<PackedPath> paths;
  paths.reserve(s.k());
  for (const auto& p : s.paths()) paths.push_back(pack(p));
  return PackedStack(std::move(paths));
}

namespace detail {

// Rows [r0, r1) of y = g (.) (B hx). Each set bit flips the sign bit of the
// pre-scaled activation; accumulation runs over ascending columns.
inline void binary_gemv_rows(const PackedPath& p, std::span<const float> hx,
                             std::span<float> y, std::size_t r0, std::size_t r1) {
  const std::size_t wpr = p.words_per_row();
  const std::size_t cols = p.cols();
  const auto bits = p.bits();
  const auto g = p.g();
  for (std::size_t r = r0; r < r1; ++r) {
    const std::uint32_t* words = bits.data() + r * wpr;
    float acc = 0.0f;
    for (std::size_t w = 0; w < wpr; ++w) {
      const std::uint32_t word = words[w];
      const std::size_t base = w * kWordBits;
      const std::size_t nb = std::min(kWordBits, cols - base);
      for (std::size_t b = 0; b < nb; ++b) {
        const std::uint32_t flip = ((word >> b) & 1u) << 31;
        acc += std::bit_cast<float>(std::bit_cast<std::uint32_t>(hx[base + b]) ^ flip);
      }
    }
    y[r] = g[r] * acc;
  }
}

inline std::vector<float> prescale(const PackedPath& p, std::span<const float> x) {
  std::vector<float> hx(x.size());
  const auto h = p.h();
  for (std::size_t j = 0; j < x.size(); ++j) hx[j] = h[j] * x[j];
  return hx;
}

template <class Fn>
void for_row_blocks(std::size_t rows, unsigned threads, Fn&& fn) {
  if (threads <= 1 || rows < 2 * threads) {
    fn(std::size_t{0}, rows);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  const std::size_t block = (rows + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t r0 = t * block;
    const std::size_t r1 = std::min(rows, r0 + block);
    if (r0 >= r1) break;
    pool.emplace_back([&fn, r0, r1] { fn(r0, r1); });
  }
}

}  // namespace detail

/// y = g (.) (B (h (.) x)) in fp32, with no weight multiplies.
inline std::vector<float> binary_gemv(const PackedPath& p, std::span<const float> x,
                                      unsigned threads = 1) {
  rabit::detail::require_shape(x.size() == p.cols(), "binary_gemv: x length != cols");
  const std::vector<float> hx = detail::prescale(p, x);
  std::vector<float> y(p.rows());
  detail::for_row_blocks(p.rows(), threads, [&](std::size_t r0, std::size_t r1) {
    detail::binary_gemv_rows(p, hx, y, r0, r1);
  });
  return y;
}

/// Sum of per-path GEMVs, combined in ascending path order. Row blocks may run
/// concurrently; the result does not depend on `threads`.
inline std::vector<float> stacked_gemv(const PackedStack& s, std::span<const float> x,
                                       unsigned threads = 1) {
  rabit::detail::require_shape(x.size() == s.cols(), "stacked_gemv: x length != cols");
  std::vector<std::vector<float>> hx;
  hx.reserve(s.k());
  for (const auto& p : s.paths()) hx.push_back(detail::prescale(p, x));
  std::vector<float> y(s.rows());
  detail::for_row_blocks(s.rows(), threads, [&](std::size_t r0, std::size_t r1) {
    std::vector<float> part(s.rows());
    for (std::size_t i = 0; i < s.k(); ++i) {
      std::span<float> dst = i == 0 ? std::span<float>(y) : std::span<float>(part);
      detail::binary_gemv_rows(s.path(i), hx[i], dst, r0, r1);
      if (i > 0)
        for (std::size_t r = r0; r < r1; ++r) y[r] += part[r];
    }
  });
  return y;
}

/// Plain fp32 dense GEMV, row-major, ascending-column accumulation.
inline std::vector<float> dense_gemv(std::span<const float> w, std::size_t rows,
                                     std::size_t cols, std::span<const float> x,
                                     unsigned threads = 1) {
  rabit::detail::require_shape(w.size() == rows * cols && x.size() == cols,
                               "dense_gemv: shape mismatch");
  std::vector<float> y(rows);
  detail::for_row_blocks(rows, threads, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      const float* row = w.data() + r * cols;
      float acc = 0.0f;
      for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
      y[r] = acc;
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// Latency harness

struct BenchShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string label() const { return std::to_string(rows) + "x" + std::to_string(cols); }
};

/// Layer shapes of 7B/13B-class decoder projections.
inline std::vector<BenchShape> default_bench_shapes() {
  return {{4096, 4096}, {11008, 4096}, {5120, 5120}, {13824, 5120}};
}

struct BenchRow {
  std::string shape;
  std::size_t k = 0;
  std::string impl;
  double median_us = 0.0;
  double p10_us = 0.0;
  double p90_us = 0.0;
  std::size_t bytes_weights = 0;
  std::size_t samples = 0;
};

namespace detail {

inline double nearest_rank(const std::vector<double>& sorted, double q) {
  const std::size_t n = sorted.size();
  std::size_t idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  idx = std::clamp<std::size_t>(idx, 1, n);
  return sorted[idx - 1];
}

template <class Fn>
BenchRow time_it(Fn&& fn, std::size_t reps, std::size_t warmup) {
  for (std::size_t i = 0; i < warmup; ++i) fn();
  std::vector<double> us;
  us.reserve(reps);
  for (std::size_t i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
  }
  std::sort(us.begin(), us.end());
  BenchRow row;
  row.samples = us.size();
  row.median_us = nearest_rank(us, 0.5);
  row.p10_us = nearest_rank(us, 0.1);
  row.p90_us = nearest_rank(us, 0.9);
  return row;
}

}  // namespace detail

struct BenchOptions {
  std::size_t k = 2;
  std::size_t reps = 10;
  std::size_t warmup = 1;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// For each shape: a random k-path packed stack vs. a dense fp32 matrix of the
/// same shape. Emits one "packed" and one "dense_fp32" row per shape.
inline std::vector<BenchRow> bench(const std::vector<BenchShape>& shapes,
                                   const BenchOptions& opt) {
  if (opt.reps < 1) throw DomainError("bench: repetitions must be >= 1");
  if (opt.k < 1) throw DomainError("bench: k must be >= 1");
  std::vector<BenchRow> out;
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<float> unif(-1.0f, 1.0f);
  volatile float sink = 0.0f;
  for (const auto& sh : shapes) {
    if (sh.rows == 0 || sh.cols == 0) throw DomainError("bench: empty shape");
    std::vector<float> x(sh.cols);
    for (float& v : x) v = unif(rng);

    std::vector<PackedPath> paths;
    const std::size_t wpr = words_per_row(sh.cols);
    const std::uint32_t tail = tail_mask(sh.cols);
    for (std::size_t i = 0; i < opt.k; ++i) {
      std::vector<std::uint32_t> bits(sh.rows * wpr);
      for (std::size_t r = 0; r < sh.rows; ++r)
        for (std::size_t w = 0; w < wpr; ++w)
          bits[r * wpr + w] =
              static_cast<std::uint32_t>(rng()) & (w + 1 == wpr ? tail : 0xFFFFFFFFu);
      std::vector<float> g(sh.rows), h(sh.cols);
      for (float& v : g) v = unif(rng);
      for (float& v : h) v = unif(rng);
      paths.emplace_back(sh.rows, sh.cols, std::move(bits), std::move(g), std::move(h));
    }
    const PackedStack stack(std::move(paths));
    BenchRow packed = detail::time_it(
        [&] { sink = sink + stacked_gemv(stack, x, opt.threads)[0]; }, opt.reps,
        opt.warmup);
    packed.shape = sh.label();
    packed.k = opt.k;
    packed.impl = "packed";
    packed.bytes_weights = opt.k * packed_weight_bytes(sh.rows, sh.cols);
    out.push_back(packed);

    std::vector<float> dense(sh.rows * sh.cols);
    for (float& v : dense) v = unif(rng);
    BenchRow row = detail::time_it(
        [&] { sink = sink + dense_gemv(dense, sh.rows, sh.cols, x, opt.threads)[0]; },
        opt.reps, opt.warmup);
    row.shape = sh.label();
    row.k = opt.k;
    row.impl = "dense_fp32";
    row.bytes_weights = sh.rows * sh.cols * sizeof(float);
    out.push_back(row);
  }
  return out;
}

/// shape,k,impl,median_us,p10_us,p90_us,bytes_weights
inline void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  csv::Writer w(os);
  w.header({"shape", "k", "impl", "median_us", "p10_us", "p90_us", "bytes_weights"});
  for (const auto& r : rows) {
    w.cell(r.shape).cell(std::uint64_t{r.k}).cell(r.impl).cell(r.median_us).cell(r.p10_us)
        .cell(r.p90_us).cell(std::uint64_t{r.bytes_weights});
    w.end_row();
  }
}

}  // namespace rabit::kernel
