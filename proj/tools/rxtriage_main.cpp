#include "rxtriage/cli.hpp"

int main(int argc, char** argv) { return rxtriage::cli::run(argc, argv); }
