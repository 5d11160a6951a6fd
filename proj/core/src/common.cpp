#include "mcanet/common.hpp"

#include <atomic>

#include "gemm.hpp"

namespace mcanet {

namespace {
std::atomic<bool> g_deterministic{false};
}

void set_deterministic(bool on) {
  g_deterministic.store(on);
  detail::set_blas_threads(on ? 1 : 0 /* 0 = library default */);
}

bool deterministic() { return g_deterministic.load(); }

std::string version() { return "0.1.0"; }

}  // namespace mcanet
