// Store/retrieve semantics: values stored with create() come back from get()
// in insertion order (index 1 is the first element).
#include <cstdio>
#include "FCplx.h"

int main() {
  FCplx f(4);
  f.create(1, -1);
  f.create(2, -2);
  f.create(3, -3);
  for (int i = 1; i <= 3; i++) {
    std::complex<int> v = f.get(i);
    if (v.real() != i || v.imag() != -i) {
      std::printf("FUNCTIONAL-TEST-FAIL: get(%d) returned (%d,%d)\n", i, v.real(), v.imag());
      return 1;
    }
  }
  f.create(4, -4);
  std::complex<int> last = f.get(4);
  if (last.real() != 4 || last.imag() != -4) {
    std::printf("FUNCTIONAL-TEST-FAIL: get(4) returned the wrong value\n");
    return 1;
  }
  return 0;
}
