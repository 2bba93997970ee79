#include <iostream>
#include <string>
#include <vector>

#include "evalign_tools/app.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return evalign::cli::run_cli(args, std::cout, std::cerr);
}
