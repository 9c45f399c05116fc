// Step-count wrapper: parses integers from the command line and calls
// sort() exactly once.
#include <cstdio>
#include <cstdlib>
#include <vector>

void sort(std::vector<int> &list);

int main(int argc, char **argv) {
  std::vector<int> input;
  input.reserve(argc > 1 ? argc - 1 : 0);
  for (int i = 1; i < argc; i++) {
    input.push_back(std::atoi(argv[i]));
  }
  sort(input);
  for (size_t i = 0; i < input.size(); i++) {
    std::printf("%d ", input[i]);
  }
  std::printf("\n");
  return 0;
}
