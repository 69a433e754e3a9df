#include <iostream>
#include <string>
#include <vector>

#include "surgrep/cli.hpp"

int main(int argc, char** argv) {
  return surgrep::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
