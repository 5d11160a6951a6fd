#include <cstdio>

#include "mcanet/common.hpp"

int main() {
  std::printf("mcanet %s\n", mcanet::version().c_str());
  return 0;
}
