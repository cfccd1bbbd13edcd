#include <iostream>

#include "indistill_cli/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return indistill::cli::run(args, std::cout, std::cerr);
}
