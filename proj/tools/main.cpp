#include <iostream>
#include <string>
#include <vector>

#include "rangesort/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return rangesort::cli::run(args, std::cout, std::cerr);
}
