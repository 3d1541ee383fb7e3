#include "defe/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return defe::cli::run(argc, argv, std::cout, std::cerr); }
