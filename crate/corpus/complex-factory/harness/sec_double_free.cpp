// CWE-315: releasing the container twice.
#include "FCplx.h"
#include "security_check.h"

int main() {
  FCplx f(3);
  f.create(1, 2);
  f.empty();
  f.empty();
  return 0;
}
