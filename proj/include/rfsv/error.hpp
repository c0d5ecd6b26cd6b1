#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rfsv
{
    enum class ErrorCode
    {
        Shape,
        EmptyMask,
        DeadPath,
        Config,
        Data,
        Numeric,
        State,
        Io
    };

    /// Machine-parseable tag, e.g. "E_SHAPE".
    std::string_view error_tag(ErrorCode code) noexcept;

    /// Process exit status for an error class: 2 config, 3 data, 4 numeric.
    int exit_status(ErrorCode code) noexcept;

    class Error : public std::runtime_error
    {
    public:
        Error(ErrorCode code, const std::string &message) :
                std::runtime_error(message), m_code(code)
        {
        }
        ErrorCode code() const noexcept
        {
            return m_code;
        }
    private:
        ErrorCode m_code;
    };

    [[noreturn]] inline void fail(ErrorCode code, const std::string &message)
    {
        throw Error(code, message);
    }
}
