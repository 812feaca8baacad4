#include <iostream>
#include <string>
#include <vector>

#include "brhc_cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return brhc::cli::run_cli(args, std::cout, std::cerr);
}
