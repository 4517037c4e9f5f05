#include "mctangent/cli.hpp"

int main(int argc, char** argv) { return mct::run_cli(argc, argv); }
