#include <vector>

#include "flowtse/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return flowtse::cli_run(args);
}
