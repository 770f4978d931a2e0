#include "radcls/cli.hpp"

int main(int argc, char** argv) { return radcls::cli::main(argc, argv); }
