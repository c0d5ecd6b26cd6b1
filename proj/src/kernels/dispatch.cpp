#include "rfsv/kernels.hpp"
#include "rfsv/error.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace rfsv::kernels
{
#if !defined(RFSV_HAVE_AVX2)
    const KernelTable* avx2_table() noexcept
    {
        return nullptr;
    }
#endif

    bool cpu_supports(Backend backend) noexcept
    {
        switch (backend)
        {
            case Backend::Scalar:
                return true;
            case Backend::Avx2:
#if defined(RFSV_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
                return avx2_table() != nullptr && __builtin_cpu_supports("avx2");
#else
                return false;
#endif
        }
        return false;
    }

    std::vector<Backend> available_backends()
    {
        std::vector<Backend> result { Backend::Scalar };
        if (cpu_supports(Backend::Avx2))
            result.push_back(Backend::Avx2);
        return result;
    }

    Backend parse_backend(std::string_view name)
    {
        if (name == "scalar")
            return Backend::Scalar;
        if (name == "avx2")
            return Backend::Avx2;
        fail(ErrorCode::Config, "unknown kernel backend '" + std::string(name) + "'");
    }

    namespace
    {
        const KernelTable* table_for(Backend backend) noexcept
        {
            return backend == Backend::Avx2 ? avx2_table() : &scalar_table();
        }

        const KernelTable* initial_table() noexcept
        {
            if (const char *env = std::getenv("RFSV_KERNELS"))
            {
                const std::string_view name(env);
                if (name == "scalar")
                    return &scalar_table();
                if (name == "avx2" && cpu_supports(Backend::Avx2))
                    return avx2_table();
            }
            return cpu_supports(Backend::Avx2) ? avx2_table() : &scalar_table();
        }

        std::atomic<const KernelTable*>& current() noexcept
        {
            static std::atomic<const KernelTable*> table { initial_table() };
            return table;
        }
    }

    const KernelTable& active() noexcept
    {
        return *current().load(std::memory_order_relaxed);
    }

    void select(Backend backend)
    {
        if (!cpu_supports(backend))
            fail(ErrorCode::Config, "kernel backend not supported on this CPU");
        current().store(table_for(backend), std::memory_order_relaxed);
    }
}
