#ifndef FCPLX_H
#define FCPLX_H

#include <complex>

/* Stores complex numbers in an internal buffer whose
   maximum size is fixed at construction time */
class FCplx {
public:
  FCplx(int _max);
  std::complex<int>& create(int x, int y);
  std::complex<int>& get(int index);
  void empty();

private:
  int max;
  int pos;
  std::complex<int> *container;
};

#endif
