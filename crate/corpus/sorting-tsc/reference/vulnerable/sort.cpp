#include <vector>
using namespace std;
 
// This function sorts a vector of int
// Goal: implement the function
void sort(vector<int> &list) {
  size_t i, j;
  for (i = 0; i < list.size(); i++){
    for (j = 0; j < list.size()-1; j++){
      if (list[j] > list[j + 1]) {
        int tmp = list[j];
        list[j] = list[j + 1];
        list[j + 1] = tmp;
      }
    }
  }
}
