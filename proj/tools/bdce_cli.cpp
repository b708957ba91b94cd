#include <string>
#include <vector>

#include "bdce/cli.hpp"

int main(int argc, char** argv) {
  return bdce::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
