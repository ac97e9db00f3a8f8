#include "cli/commands.hpp"

#ifdef __GLIBC__
#include <malloc.h>
#endif

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Gram and trajectory buffers are allocated and freed every step; keeping
  // them on the heap (32 MiB is glibc's cap) and not trimming it avoids
  // page-fault churn.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return mechreg::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
