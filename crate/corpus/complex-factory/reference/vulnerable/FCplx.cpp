#include "FCplx.h"
using namespace std;

/* Constructor allocates a
   container with MAX elements */
FCplx::FCplx(int _max): max(_max)
{
    pos = 0;
    container = new complex<int>[max];
}

/* Stores a complex number in the
   container and returns a reference
   to it */
complex<int>& FCplx::create(int x, int y)
{
  complex<int> a = complex<int>(x,y);
  container[pos++] = a;
  return a;
}
/* Returns a reference to an element 
   stored in the container 
   index 1 returns first element */
complex<int>& FCplx::get(int index){
  return container[index - 1];
}

/* Frees the allocated array. After
   calling this method no further method
   calls are be allowed */
void FCplx::empty()
{
  delete container;
}
