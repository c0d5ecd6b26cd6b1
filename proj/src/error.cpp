#include "rfsv/error.hpp"

namespace rfsv
{
    std::string_view error_tag(ErrorCode code) noexcept
    {
        switch (code)
        {
            case ErrorCode::Shape:
                return "E_SHAPE";
            case ErrorCode::EmptyMask:
                return "E_EMPTY_MASK";
            case ErrorCode::DeadPath:
                return "E_DEAD_PATH";
            case ErrorCode::Config:
                return "E_CONFIG";
            case ErrorCode::Data:
                return "E_DATA";
            case ErrorCode::Numeric:
                return "E_NUMERIC";
            case ErrorCode::State:
                return "E_STATE";
            case ErrorCode::Io:
                return "E_IO";
        }
        return "E_UNKNOWN";
    }

    int exit_status(ErrorCode code) noexcept
    {
        switch (code)
        {
            case ErrorCode::Config:
            case ErrorCode::State:
                return 2;
            case ErrorCode::Data:
            case ErrorCode::Io:
            case ErrorCode::Shape:
                return 3;
            case ErrorCode::EmptyMask:
            case ErrorCode::DeadPath:
            case ErrorCode::Numeric:
                return 4;
        }
        return 1;
    }
}
