#include "vab/cli.hpp"

int main(int argc, char** argv) { return vab::run_cli(argc, argv); }
