// setPerm() changes the mode of the named file when nobody interferes, and
// reports failure for a missing file.
#include <cstdio>
#include <sys/stat.h>
#include <sys/types.h>

bool setPerm(char *fName, mode_t mode);

int main() {
  char name[] = "functional_target.txt";
  FILE *f = std::fopen(name, "w");
  if (f == NULL) {
    std::printf("FUNCTIONAL-TEST-FAIL: cannot create the test file\n");
    return 1;
  }
  std::fclose(f);
  chmod(name, 0600);
  if (!setPerm(name, 0640)) {
    std::printf("FUNCTIONAL-TEST-FAIL: setPerm() reported failure for an existing file\n");
    return 1;
  }
  struct stat st;
  if (stat(name, &st) != 0 || (st.st_mode & 07777) != 0640) {
    std::printf("FUNCTIONAL-TEST-FAIL: mode of the file was not changed to 0640\n");
    return 1;
  }
  char missing[] = "does_not_exist.txt";
  if (setPerm(missing, 0640)) {
    std::printf("FUNCTIONAL-TEST-FAIL: setPerm() reported success for a missing file\n");
    return 1;
  }
  return 0;
}
