#include <iostream>

#include "edgechain/cli.hpp"

int main(int argc, char** argv) { return edgechain::cli::run(argc, argv, std::cout, std::cerr); }
