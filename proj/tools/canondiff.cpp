//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <iostream>
#include <string>
#include <vector>

#include "canondiff/cli.h"

int main(int argc, char **argv) {
  const std::vector<std::string> args(argv, argv + argc);
  return canondiff::run_cli(args, std::cout, std::cerr);
}
