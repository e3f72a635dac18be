#include "evopress/cli.hpp"

int main(int argc, char** argv) {
    return evopress::run_cli(argc, argv);
}
