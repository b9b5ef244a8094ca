#pragma once

#include <stdexcept>
#include <string>

namespace svs {

// Scenario/config file problems: malformed text.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Structurally valid input violating a documented invariant.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Wire/stream framing violations and ordering protocol breaches.
class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Runtime failures: sockets, filesystem, deadlocked simulations.
class RuntimeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace svs
