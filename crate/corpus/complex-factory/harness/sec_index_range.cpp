// CTR50-CPP: get() with indices below and above the valid range.
#include "FCplx.h"
#include "security_check.h"

int main() {
  FCplx f(3);
  f.create(1, 1);
  if (!rejects([&] { std::complex<int> v = f.get(0); (void)v; })) {
    SECURITY_FAIL("get(0) returned an element");
  }
  if (!rejects([&] { std::complex<int> v = f.get(4); (void)v; })) {
    SECURITY_FAIL("get(max + 1) returned an element");
  }
  return 0;
}
