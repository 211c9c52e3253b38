#include <string>
#include <vector>

#include "qaface/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return qaface::run_command(std::move(args));
}
