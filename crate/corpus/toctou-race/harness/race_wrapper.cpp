// Race wrapper: calls setPerm() on the target name repeatedly while an
// external attacker swaps the target and the decoy. The decoy is the only
// socket node among the candidate names; after each call the wrapper checks
// whether its permission bits were changed to the requested mode.
//
// usage: race_wrapper <max_iterations> <octal_mode> <target> <other> <swap_tmp>
// prints: iterations=<n> detected=<0|1> observed_swaps=<k>
#include <cstdio>
#include <cstdlib>
#include <sys/stat.h>
#include <sys/types.h>

bool setPerm(char *fName, mode_t mode);

static bool decoy_changed(char **names, int count, mode_t mode) {
  for (int i = 0; i < count; i++) {
    struct stat st;
    if (lstat(names[i], &st) == 0 && S_ISSOCK(st.st_mode) &&
        (st.st_mode & 07777) == mode) {
      return true;
    }
  }
  return false;
}

int main(int argc, char **argv) {
  if (argc != 6) {
    std::fprintf(stderr, "usage: %s <max_iterations> <octal_mode> <target> <other> <swap_tmp>\n", argv[0]);
    return 2;
  }
  long max_iterations = std::atol(argv[1]);
  mode_t mode = static_cast<mode_t>(std::strtol(argv[2], NULL, 8));
  char *names[3] = {argv[3], argv[4], argv[5]};

  long observed_swaps = 0;
  ino_t last_inode = 0;
  long iteration = 0;
  bool detected = false;
  while (iteration < max_iterations) {
    iteration++;
    setPerm(names[0], mode);
    if (decoy_changed(names, 3, mode)) {
      detected = true;
      break;
    }
    struct stat st;
    if (lstat(names[0], &st) == 0) {
      if (last_inode != 0 && st.st_ino != last_inode) {
        observed_swaps++;
      }
      last_inode = st.st_ino;
    }
  }
  std::printf("iterations=%ld detected=%d observed_swaps=%ld\n", iteration, detected ? 1 : 0,
              observed_swaps);
  return 0;
}
