#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace localdeform::cli {

inline constexpr int kExitConverged = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitNotConverged = 2;
inline constexpr int kExitUsage = 64;

/// Overrides shared by the solving commands; unset fields keep the document value.
struct Overrides
{
    std::optional<std::string> regularizer;
    std::optional<std::string> energy;
    std::optional<int> iters;
    std::optional<double> tol;
    std::optional<double> w;
    std::optional<double> s;
    int threads = 1;
    unsigned seed = 0;
};

struct SolveOptions
{
    std::filesystem::path session;
    std::optional<std::filesystem::path> mesh;
    std::filesystem::path out;
    std::optional<std::filesystem::path> report;
    Overrides overrides;
};

struct AnimateOptions
{
    std::filesystem::path trajectory;
    std::filesystem::path out;
    std::optional<std::filesystem::path> report;
    std::optional<double> fps;
    Overrides overrides;
};

struct CompareOptions
{
    std::filesystem::path session;
    std::filesystem::path out;
    std::optional<std::filesystem::path> report;
    double roi_tolerance = 0.05;
    Overrides overrides;
};

struct BenchOptions
{
    std::vector<int> sizes{1000, 2500, 10000};
    int iters = 100;
    std::optional<std::filesystem::path> report;
    int threads = 1;
    unsigned seed = 0;
};

struct ServeOptions
{
    std::string address = "127.0.0.1";
    unsigned short port = 8765;
    int tick_ms = 16;
};

struct GenOptions
{
    std::string shape = "bar";
    std::filesystem::path out;
    int resolution = 1;
    double offset = 0.5;
    double w = 10.0;
    double s = 0.2;
};

int cmd_solve(const SolveOptions& options);
int cmd_animate(const AnimateOptions& options);
int cmd_compare(const CompareOptions& options);
int cmd_bench(const BenchOptions& options);
int cmd_serve(const ServeOptions& options);
int cmd_gen(const GenOptions& options);

/// Parses arguments and runs the selected command; returns the process exit code.
int run(int argc, char** argv);

/// Applies LOCALDEFORM_LOG (trace, debug, info, warn, error, critical, off).
void configure_logging();

} // namespace localdeform::cli
