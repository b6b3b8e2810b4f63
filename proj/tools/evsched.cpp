#include <string>
#include <vector>

#include <evsched/cli.hpp>

int main(int argc, char** argv) {
    return evsched::cli::main(std::vector<std::string>(argv, argv + argc));
}
