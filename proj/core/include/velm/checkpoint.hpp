#pragma once

#include <filesystem>
#include <iosfwd>

#include "velm/rnnlm.hpp"

namespace velm {

// Binary container, all integers u64 and all reals IEEE f64, little endian:
//   "RNNLM1"
//   d_s, d_h, layers, vocab size, shortlist size
//   vocabulary: per word u64 byte length + UTF-8 bytes
//   S, then per layer W, R, b, then U, b_y; matrices column-major
// Load validates magic, sizes and trailing bytes; round trips are bit-exact.
void save_checkpoint(const RnnLmModel& model, std::ostream& out);
void save_checkpoint(const RnnLmModel& model, const std::filesystem::path& path);
RnnLmModel load_checkpoint(std::istream& in, const std::string& source = "<stream>");
RnnLmModel load_checkpoint(const std::filesystem::path& path);

}  // namespace velm
