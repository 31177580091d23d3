#pragma once

namespace ctxmhe::cli {

/// Entry point shared by the ctxmhe binary and the acceptance suite.
int run(int argc, const char* const* argv);

}  // namespace ctxmhe::cli
