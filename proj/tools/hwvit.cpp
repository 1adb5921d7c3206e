#include <string>
#include <vector>

#include "hwvit/cli.hpp"

int main(int argc, char** argv) {
  return hwvit::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
