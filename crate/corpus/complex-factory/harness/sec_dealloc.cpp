// MEM51-CPP: the container must be released with the matching operator.
#include "FCplx.h"
#include "security_check.h"

int main() {
  FCplx f(3);
  f.create(1, 2);
  f.empty();
  return 0;
}
