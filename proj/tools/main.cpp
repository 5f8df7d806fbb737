#include <localdeform/cli.hpp>

int main(int argc, char** argv)
{
    return localdeform::cli::run(argc, argv);
}
