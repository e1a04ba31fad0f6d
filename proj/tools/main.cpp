#include <iostream>
#include <string>
#include <vector>

#include "ccrecall/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return ccrecall::run_cli(args, std::cout, std::cerr);
}
