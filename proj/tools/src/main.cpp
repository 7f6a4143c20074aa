// Copyright 2026 The Cantus Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) {
  return cantus::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
