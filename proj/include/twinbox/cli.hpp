#ifndef TWINBOX_CLI_HPP
#define TWINBOX_CLI_HPP

namespace twinbox::cli {

// Entry point behind the twinbox binary; factored out so tests can drive the
// command surface in-process. Exit codes: 0 success, 1 runtime failure,
// 2 bad configuration or usage.
int run(int argc, const char* const* argv);

}  // namespace twinbox::cli

#endif  // TWINBOX_CLI_HPP
