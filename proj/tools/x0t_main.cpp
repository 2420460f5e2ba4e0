#include "x0t/cli.hpp"

int main(int argc, char** argv) {
    return x0t::run_cli(argc, argv);
}
