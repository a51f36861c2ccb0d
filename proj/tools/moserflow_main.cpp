#include "moserflow/cli.hpp"

int main(int argc, char** argv) {
    return moserflow::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
