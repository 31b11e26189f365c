#include "holab/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return holab::cli::run_cli(argc, argv, std::cout, std::cerr);
}
