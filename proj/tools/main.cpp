#include <iostream>

#include "fbfev/cli.hpp"

int main(int argc, char** argv) {
  return fbfev::run_cli(argc, argv, std::cout, std::cerr);
}
