#include <vector>
#include <string>

#include "bilin/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return bilin::run_cli(args);
}
