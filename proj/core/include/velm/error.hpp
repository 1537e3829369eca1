#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace velm {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. line() is 1-based; 0 means "end of input".
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + (line == 0 ? std::string("EOF") : std::to_string(line)) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A word that a lookup required but the model or embedding table does not know.
class UnknownWordError : public Error {
 public:
  explicit UnknownWordError(std::string word, const std::string& where)
      : Error("unknown word '" + word + "' in " + where), word_(std::move(word)) {}

  const std::string& word() const noexcept { return word_; }

 private:
  std::string word_;
};

}  // namespace velm
