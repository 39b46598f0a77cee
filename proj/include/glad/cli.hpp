#pragma once

namespace glad {

// Subcommands: gen-data, pretrain, finetune, probe, analyze, transfer-curve.
// Returns 0 on success, 2 on usage or config errors, 1 on runtime failures.
int cli_main(int argc, const char* const* argv);

}  // namespace glad
