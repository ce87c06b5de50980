#include <iostream>

#include "tmhfs/cli.hpp"

int main(int argc, char** argv) { return tmhfs::cli::run_cli(argc, argv, std::cout, std::cerr); }
