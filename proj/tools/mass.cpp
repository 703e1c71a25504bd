#include "mass/cli.hpp"

int main(int argc, char** argv) { return mass::dispatch(argc, argv); }
