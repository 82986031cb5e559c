#ifndef BILEVEL_RL_IO_HPP
#define BILEVEL_RL_IO_HPP

#include <string>

namespace bilevel_rl {

// Writes to a sibling temp file and renames into place.
void write_file_atomic(const std::string& path, const std::string& contents);

std::string read_file(const std::string& path);

// Worker count for parallel batches: min(hardware, BILEVEL_RL_THREADS if set).
int worker_count();

}  // namespace bilevel_rl

#endif
