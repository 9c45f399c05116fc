// CWE-416 / EXP45-CPP: storing into the container after it was released.
#include "FCplx.h"
#include "security_check.h"

int main() {
  FCplx f(3);
  f.create(1, 2);
  f.empty();
  if (!rejects([&] { f.create(3, 4); })) {
    SECURITY_FAIL("create() succeeded after empty()");
  }
  return 0;
}
