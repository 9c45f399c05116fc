// MEM31-C / MEM51-CPP: a factory that goes out of scope without empty()
// must not leak its container.
#include "FCplx.h"
#include "security_check.h"

static void use_and_forget() {
  FCplx f(3);
  f.create(1, 2);
  f.create(3, 4);
}

int main() {
  use_and_forget();
  return 0;
}
