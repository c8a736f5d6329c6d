#include "mvherit/cli.hpp"

int main(int argc, char** argv) { return mvherit::dispatch(argc, argv); }
