// Optional multiply-accumulate instrumentation for the layer primitives.
// A counter is attached per thread; when none is attached the hooks are no-ops.
#pragma once

#include <cstdint>

namespace fsbnet::macs {

inline thread_local std::uint64_t* g_sink = nullptr;

inline void add(std::uint64_t n) {
  if (g_sink) *g_sink += n;
}

// Attaches a counter for the lifetime of the scope.
class Scope {
 public:
  explicit Scope(std::uint64_t& counter) : prev_(g_sink) { g_sink = &counter; }
  ~Scope() { g_sink = prev_; }
  Scope(const Scope&) = delete;
  Scope& operator=(const Scope&) = delete;

 private:
  std::uint64_t* prev_;
};

}  // namespace fsbnet::macs
