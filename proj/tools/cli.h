#ifndef MMRANK_TOOLS_CLI_H_
#define MMRANK_TOOLS_CLI_H_

#include <iosfwd>

namespace mmrank {

// Entry point of the mmrank command line tool. Returns the process exit
// status: 0 on success, 1 for data or runtime errors, and the parser's code
// for usage errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mmrank

#endif  // MMRANK_TOOLS_CLI_H_
