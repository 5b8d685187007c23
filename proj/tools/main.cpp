#include <iostream>

#include "mccws/cli.hpp"

int main(int argc, char** argv) {
  return mccws::cli::run(argc, argv, std::cin, std::cout, std::cerr);
}
