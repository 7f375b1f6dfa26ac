#include <iostream>
#include <string>
#include <vector>

#include "fairadapter/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return fairadapter::run_cli(args, std::cerr);
}
