#include <iostream>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "pg2/cli.hpp"

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  std::vector<std::string> args(argv + 1, argv + argc);
  return pg2::run_cli(args, std::cout, std::cerr);
}
