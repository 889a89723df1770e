#include "resocal/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return resocal::cli::run(argc, argv, std::cout, std::cerr); }
