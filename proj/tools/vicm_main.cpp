#include <vector>

#include "vicm/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return vicm::run_command(args);
}
