#include "smica/cli.hpp"

int main(int argc, char **argv) { return smica::cli::main(argc, argv); }
