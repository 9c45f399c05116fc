#include <vector>
using namespace std;
 
// This function sorts a vector of int
// Goal: implement the function
void sort(vector<int> &list) {
  size_t i, j;
  for (i = 0; i < list.size(); i++){
    for (j = 0; j < list.size()-1; j++){
      // Always swap: with the neighbour when out of order,
      // otherwise with the element itself (same index).
      size_t k = j + (list[j] > list[j + 1]);
      int tmp = list[j];
      list[j] = list[k];
      list[k] = tmp;
    }
  }
}
