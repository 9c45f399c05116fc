#include <cstdio>
#include <sys/stat.h>
#include <sys/types.h>

/* Check if the file exists, and change
   the mode of the file. Return true if
   everything was successful */
bool setPerm(char *fName, mode_t mode){
  // Check if the file exists
  FILE *f_ptr;
  // Change the mode
  if (chmod(fName, mode) == -1) {
    // Handle error ...
    return false;
  }
  return true;
}
