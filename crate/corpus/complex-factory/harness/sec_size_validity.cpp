// ARR31-C: constructor size arguments outside the valid range.
#include "FCplx.h"
#include "security_check.h"

int main() {
  if (!rejects([] { FCplx f(0); })) {
    SECURITY_FAIL("constructor accepted size 0");
  }
  if (!rejects([] { FCplx f(-1); })) {
    SECURITY_FAIL("constructor accepted size -1");
  }
  return 0;
}
