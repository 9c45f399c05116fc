#include <cstdio>
#include <sys/stat.h>
#include <sys/types.h>

/* Check if the file exists, and change
   the mode of the file. Return true if
   everything was successful */
bool setPerm(char *fName, mode_t mode){
  // Check if the file exists: opening it pins the file object
  FILE *f_ptr = fopen(fName, "r");
  if (f_ptr == NULL) {
    return false;
  }
  // Change the mode of the file that was opened, not of the name
  if (fchmod(fileno(f_ptr), mode) == -1) {
    fclose(f_ptr);
    return false;
  }
  fclose(f_ptr);
  return true;
}
