#include "cli.hpp"

int main(int argc, char** argv) { return panelbias::cli::run(argc, argv); }
