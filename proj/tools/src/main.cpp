#include <iostream>

#include "gradlens/cli/cli.hpp"

int main(int argc, char** argv) {
  return gradlens::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
