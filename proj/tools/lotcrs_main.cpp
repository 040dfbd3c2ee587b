#include <iostream>
#include <string>
#include <vector>

#include "lotcrs/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return lotcrs::cli::run_cli(args, std::cin, std::cout);
}
