#include "afm/cli.hpp"

int main(int argc, char** argv) { return afm::run_cli(argc, argv); }
