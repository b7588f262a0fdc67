#include <string>
#include <vector>

#include "adafuse/cli.hpp"

int main(int argc, char** argv) {
  return adafuse::run_cli(std::vector<std::string>(argv, argv + argc));
}
