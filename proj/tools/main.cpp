#include <string>
#include <vector>

#include "hmvae/cli.hpp"

int main(int argc, char** argv) {
  return hmvae::cli::dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
