#ifndef DCR_CLI_HPP
#define DCR_CLI_HPP

#include <string>
#include <vector>

namespace dcr::cli {

/// Entry point behind the `dcr` binary. Subcommands: gen, stats, train,
/// eval, diagnose, oracle-check, gradcheck. Returns 0 on success, 1 on a
/// usage error, 2 on a validation or check failure.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace dcr::cli

#endif  // DCR_CLI_HPP
