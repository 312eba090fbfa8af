#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace protip {

// Base for every error raised by the library. `code()` doubles as the CLI
// exit status so each failure class is distinguishable from the shell.
class Error : public std::runtime_error {
public:
    Error(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
    int code() const noexcept { return code_; }

private:
    int code_;
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(2, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(3, what) {}
};

class ParseError : public Error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : Error(4, source + ":" + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class CorpusError : public Error {
public:
    explicit CorpusError(const std::string& what) : Error(5, what) {}
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error(6, what) {}
};

class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error(7, what) {}
};

class MissingEmbeddingError : public Error {
public:
    explicit MissingEmbeddingError(const std::string& what) : Error(8, what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(9, what) {}
};

class DivergenceError : public Error {
public:
    DivergenceError(std::size_t epoch, std::size_t batch, const std::string& what)
        : Error(10, what + " (epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ")"),
          epoch_(epoch), batch_(batch) {}
    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
};

class EvaluationError : public Error {
public:
    explicit EvaluationError(const std::string& what) : Error(11, what) {}
};

}  // namespace protip
