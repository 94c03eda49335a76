#include <iostream>

#include "cafield/cli/commands.hpp"

int main(int argc, char** argv) { return cafield::cli::run_cli(argc, argv, std::cout, std::cerr); }
