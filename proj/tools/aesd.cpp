#include "aesindy/cli.hpp"

int main(int argc, char** argv) { return aesindy::dispatch(argc, argv); }
