#include "vpatch/cli.hpp"

int main(int argc, char** argv) { return vpatch::run_cli(argc, argv); }
