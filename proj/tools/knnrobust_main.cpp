#include <iostream>

#include "knnrobust/cli.hpp"

int main(int argc, char** argv) { return knnrobust::cli::run(argc, argv, std::cout, std::cerr); }
