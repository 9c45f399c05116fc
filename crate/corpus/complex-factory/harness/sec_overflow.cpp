// CTR50-CPP: storing more elements than the container holds.
#include "FCplx.h"
#include "security_check.h"

int main() {
  FCplx f(3);
  for (int i = 0; i < 3; i++) {
    f.create(i, i);
  }
  if (!rejects([&] { f.create(4, 4); })) {
    SECURITY_FAIL("create() accepted a fourth element into a container of size 3");
  }
  return 0;
}
