// Helpers shared by the security-test drivers.
#ifndef SECURITY_CHECK_H
#define SECURITY_CHECK_H

#include <cstdio>
#include <cstdlib>
#include <stdexcept>

#define SECURITY_FAIL(msg)                                                   \
  do {                                                                       \
    std::printf("SECURITY-TEST-FAIL: %s\n", (msg));                          \
    std::fflush(stdout);                                                     \
    std::exit(1);                                                            \
  } while (0)

// True when the callable rejects its input with a std::logic_error
// (invalid_argument, out_of_range, length_error, ...).
template <typename F> bool rejects(F f) {
  try {
    f();
  } catch (const std::logic_error &) {
    return true;
  }
  return false;
}

#endif
