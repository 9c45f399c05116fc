// Sorting correctness over 100 pseudo-random vectors: the result must be
// non-decreasing and a permutation of the input.
#include <algorithm>
#include <cstdio>
#include <vector>

void sort(std::vector<int> &list);

static unsigned long next_value(unsigned long &state) {
  state = state * 6364136223846793005UL + 1442695040888963407UL;
  return state >> 33;
}

int main() {
  unsigned long state = 20210617UL;
  for (int round = 0; round < 100; round++) {
    size_t len = next_value(state) % 17;
    std::vector<int> input;
    for (size_t i = 0; i < len; i++) {
      input.push_back(static_cast<int>(next_value(state) % 201) - 100);
    }
    std::vector<int> expected = input;
    std::sort(expected.begin(), expected.end());
    std::vector<int> actual = input;
    ::sort(actual);
    if (actual != expected) {
      std::printf("FUNCTIONAL-TEST-FAIL: round %d of length %zu is not sorted correctly\n",
                  round, len);
      return 1;
    }
  }
  return 0;
}
