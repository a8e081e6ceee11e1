#include <iostream>
#include <string>
#include <vector>

#include "framesel/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return framesel::run_cli(args, std::cout, std::cerr);
}
