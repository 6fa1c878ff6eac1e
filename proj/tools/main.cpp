#include <string>
#include <vector>

#include "wclab/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return wclab::run_cli(args);
}
