// EXP35-CPP: reading an element that was never stored.
#include "FCplx.h"
#include "security_check.h"

int main() {
  FCplx f(3);
  if (!rejects([&] { std::complex<int> v = f.get(1); (void)v; })) {
    SECURITY_FAIL("get(1) returned an element before any create()");
  }
  return 0;
}
