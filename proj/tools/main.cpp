#include <iostream>

#include "dpmv3/cli.hpp"

int main(int argc, char** argv)
{
    return dpmv3::run_cli(argc, argv, std::cout, std::cerr);
}
