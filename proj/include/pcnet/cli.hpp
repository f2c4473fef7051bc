#pragma once

namespace pcnet::cli {

// Entry point behind the pcnet binary. Exit codes: 0 success, 1 bad usage or
// configuration, 2 numeric failure or divergence, 3 verification failure.
int cli_main(int argc, const char* const* argv);

}  // namespace pcnet::cli
