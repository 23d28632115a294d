#include <string>
#include <vector>

#include "calibnash/experiment.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return calibnash::run_cli(std::move(args));
}
