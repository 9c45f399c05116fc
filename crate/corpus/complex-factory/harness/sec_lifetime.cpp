// EXP45-CPP: the reference returned by create() must refer to a live object.
#include "FCplx.h"
#include "security_check.h"

int main() {
  FCplx f(3);
  std::complex<int> &stored = f.create(5, 7);
  if (stored.real() != 5 || stored.imag() != 7) {
    SECURITY_FAIL("reference returned by create() does not refer to the stored value");
  }
  if (&stored != &f.get(1)) {
    SECURITY_FAIL("reference returned by create() is not the stored element");
  }
  return 0;
}
