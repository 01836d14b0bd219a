#include "causal_audit/cli.hpp"

int main(int argc, char** argv) { return causal_audit::run_cli(argc, argv); }
