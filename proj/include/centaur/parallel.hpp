#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace centaur::par {

// Global worker cap for OpenMP kernels. 0 means "hardware default".
// Kernels are written so that results are bit-identical for every setting;
// this only bounds how many threads may run.
void set_jobs(int jobs);
int jobs();

// Effective thread count a kernel will use for n items.
int threads_for(std::size_t n);

// Runs f(i) for i in [0, n) with a static schedule. f must write only to
// per-index state; iteration order must not matter.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f);

// Deterministic sum: recursive pairwise summation, independent of thread
// count (it is evaluated serially over a materialized array).
double pairwise_sum(std::span<const double> values);

// Block-ordered accumulation: splits [0, n) into fixed-size blocks, runs
// fill(block_index, begin, end, block_accum) in parallel where block_accum is
// a zeroed buffer of width `width`, then combines block buffers into `out`
// in ascending block order. Bit-deterministic for any thread count.
void accumulate_blocks(std::size_t n, std::size_t block_size, std::size_t width,
                       std::vector<double>& out,
                       const std::function<void(std::size_t, std::size_t, std::size_t,
                                                double*)>& fill);

}  // namespace centaur::par
