#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace mcanet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

namespace detail {

template <typename... Args>
std::string cat(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

}  // namespace detail

// Deterministic mode pins the BLAS thread count to 1 so that every reduction
// runs in a fixed order. Affects all subsequent kernel calls in the process.
void set_deterministic(bool on);
bool deterministic();

std::string version();

}  // namespace mcanet

#define MCANET_CHECK(cond, ...)                                  \
  do {                                                           \
    if (!(cond)) ::mcanet::fail(::mcanet::detail::cat(__VA_ARGS__)); \
  } while (0)
