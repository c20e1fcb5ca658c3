#include "stgcsn/cli.hpp"

int main(int argc, char** argv) { return stgcsn::run_cli(argc, argv); }
