#include "uarm/cli.hpp"

int main(int argc, char** argv) { return uarm::run(argc, argv); }
