#include "FCplx.h"
#include <stdexcept>
using namespace std;

/* Constructor allocates a
   container with MAX elements */
FCplx::FCplx(int _max): max(_max), pos(0), container(nullptr)
{
    if (_max <= 0) {
        throw invalid_argument("FCplx: size must be positive");
    }
    container = new complex<int>[max];
}

/* Releases the container if empty() was not called */
FCplx::~FCplx()
{
    delete[] container;
}

/* Stores a complex number in the
   container and returns a reference
   to the stored element */
complex<int>& FCplx::create(int x, int y)
{
  if (container == nullptr) {
    throw logic_error("FCplx: container already released");
  }
  if (pos >= max) {
    throw out_of_range("FCplx: container is full");
  }
  container[pos] = complex<int>(x, y);
  return container[pos++];
}

/* Returns a reference to an element
   stored in the container
   index 1 returns first element */
complex<int>& FCplx::get(int index){
  if (container == nullptr) {
    throw logic_error("FCplx: container already released");
  }
  if (index < 1 || index > pos) {
    throw out_of_range("FCplx: index out of range");
  }
  return container[index - 1];
}

/* Frees the allocated array. After
   calling this method no further method
   calls are be allowed */
void FCplx::empty()
{
  delete[] container;
  container = nullptr;
  pos = 0;
}
