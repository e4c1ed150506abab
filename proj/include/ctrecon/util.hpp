#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>

namespace ctrecon {

/// 64-bit FNV-1a. Stable across platforms and runs, unlike std::hash.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::uint64_t splitmix64(std::uint64_t x);

/// Seed for an independent random stream identified by `parts`.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts);

std::string hex64(std::uint64_t v);

/// max(0, round half away from zero).
double round_nonnegative(double x);

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Each index runs
/// exactly once; callers write results by index so output never depends on
/// scheduling. The first exception thrown by any task is rethrown.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

/// Default worker count for a call site that received `requested` (<= 0 means auto).
int resolve_threads(int requested);

}  // namespace ctrecon
