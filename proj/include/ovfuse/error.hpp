#pragma once

#include <stdexcept>
#include <string>

namespace ovfuse {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments, malformed configs, violated preconditions.
class ValidationError : public Error {
public:
    using Error::Error;
};

// tensor-core file format
class BadMagic : public Error { public: using Error::Error; };
class ShapeMismatch : public Error { public: using Error::Error; };
class TruncatedPayload : public Error { public: using Error::Error; };
class IoFailure : public Error { public: using Error::Error; };

// geometry / fusion / eval
class ChannelMismatch : public Error { public: using Error::Error; };
class LabelOutOfRange : public Error { public: using Error::Error; };
class EmptyName : public Error { public: using Error::Error; };

// text bridge
class InvalidSpan : public Error { public: using Error::Error; };
class EmbeddingCountMismatch : public Error { public: using Error::Error; };

// capability
class ZeroMap : public Error { public: using Error::Error; };
class EmptyMask : public Error { public: using Error::Error; };
class AbsentClassScore : public Error { public: using Error::Error; };

// superpoint
class DegenerateMesh : public Error { public: using Error::Error; };

// distill
class NoValidPoints : public Error { public: using Error::Error; };
class Uninitialized : public Error { public: using Error::Error; };

// synth / pipeline
class EmptySpec : public Error { public: using Error::Error; };

// Wraps a module error with the pipeline stage and input path it surfaced from.
class StageError : public Error {
public:
    StageError(const std::string& stage, const std::string& input, const std::string& what)
        : Error("stage '" + stage + "' (input: " + input + "): " + what), stage_(stage) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

}  // namespace ovfuse
