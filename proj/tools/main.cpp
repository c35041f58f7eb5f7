#include <iostream>

#include "pwer/cli.hpp"

int main(int argc, char** argv) { return pwer::cli::run(argc, argv, std::cout, std::cerr); }
