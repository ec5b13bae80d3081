#include "centaur/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <functional>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace centaur::par {

namespace {
std::atomic<int> g_jobs{0};
}  // namespace

void set_jobs(int jobs_) { g_jobs.store(jobs_ < 0 ? 0 : jobs_); }

int jobs() { return g_jobs.load(); }

int threads_for(std::size_t n) {
#ifdef _OPENMP
  int hw = omp_get_max_threads();
#else
  int hw = 1;
#endif
  int cap = g_jobs.load();
  int t = (cap == 0) ? hw : std::min(hw, cap);
  if (n < static_cast<std::size_t>(t)) t = static_cast<int>(n);
  return std::max(1, t);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f) {
  if (n == 0) return;
  const int nt = threads_for(n);
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nt)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    f(static_cast<std::size_t>(i));
  }
#else
  for (std::size_t i = 0; i < n; ++i) f(i);
#endif
}

double pairwise_sum(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

void accumulate_blocks(std::size_t n, std::size_t block_size, std::size_t width,
                       std::vector<double>& out,
                       const std::function<void(std::size_t, std::size_t, std::size_t,
                                                double*)>& fill) {
  out.assign(width, 0.0);
  if (n == 0) return;
  const std::size_t nblocks = (n + block_size - 1) / block_size;
  std::vector<double> buffers(nblocks * width, 0.0);
  parallel_for(nblocks, [&](std::size_t b) {
    const std::size_t begin = b * block_size;
    const std::size_t end = std::min(n, begin + block_size);
    fill(b, begin, end, buffers.data() + b * width);
  });
  // Fixed combine order: ascending block index.
  for (std::size_t b = 0; b < nblocks; ++b) {
    const double* src = buffers.data() + b * width;
    for (std::size_t w = 0; w < width; ++w) out[w] += src[w];
  }
}

}  // namespace centaur::par
