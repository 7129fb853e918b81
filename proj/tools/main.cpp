#include "panostitch/cli.hpp"

int main(int argc, char** argv) { return panostitch::cli::run(argc, argv); }
