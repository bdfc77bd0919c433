#include <iostream>

#include "autoscout/cli.hpp"

int main(int argc, char** argv) { return autoscout::cli_main(argc, argv, std::cout, std::cerr); }
