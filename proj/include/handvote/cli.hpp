#pragma once

namespace handvote {

/// Entry point behind the handvote binary. Returns the process exit code:
/// 0 ok, 1 property/assertion failure, 2 config or format error, 3 I/O error.
int cli_main(int argc, const char* const* argv);

}  // namespace handvote
