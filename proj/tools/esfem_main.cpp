#include "esfem/cli.hpp"

int main(int argc, char** argv) { return esfem::cli::run(argc, argv); }
