#include "predmetric/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return predmetric::cli::run(argc, argv, std::cout, std::cerr); }
