#include "rlrt/cli.hpp"

int main(int argc, char** argv) { return rlrt::run_cli(argc, argv); }
