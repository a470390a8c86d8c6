#include <iostream>

#include "cli/commands.hpp"

int main(int argc, char** argv) { return cli::run_i3_cli(argc, argv, std::cout, std::cerr); }
