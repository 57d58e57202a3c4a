#include <string>
#include <vector>

#include "trae/cli.hpp"

int main(int argc, char** argv) {
    return trae::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
