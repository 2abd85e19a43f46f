#include "filterstab/cli.hpp"

int main(int argc, char** argv) { return filterstab::cli::main(argc, argv); }
