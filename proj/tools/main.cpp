#include "blstab/cli.hpp"

int main(int argc, char** argv) { return blstab::dispatch(argc, argv); }
