#include <iostream>

#include "bgate/cli.hpp"

int main(int argc, char** argv) {
  return bgate::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
