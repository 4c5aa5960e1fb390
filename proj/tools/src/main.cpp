#include <iostream>

#include "ibowimg/cli.hpp"

int main(int argc, char** argv) {
  return ibowimg::cli::run(argc, argv, std::cout, std::cerr);
}
