#include "rfsv/tensor.hpp"
#include "rfsv/error.hpp"

#include <algorithm>
#include <cmath>

namespace rfsv
{
    std::string Shape::str() const
    {
        return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + "]";
    }

    namespace
    {
        void check_shape(Shape shape)
        {
            if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0)
                fail(ErrorCode::Shape, "negative tensor dimension " + shape.str());
        }
    }

    Tensor::Tensor(Shape shape, float fill) :
            m_shape(shape)
    {
        check_shape(shape);
        m_data.assign(shape.volume(), fill);
    }

    Tensor::Tensor(Shape shape, std::vector<float> data) :
            m_shape(shape), m_data(std::move(data))
    {
        check_shape(shape);
        if (m_data.size() != shape.volume())
            fail(ErrorCode::Shape, "tensor data length " + std::to_string(m_data.size()) + " does not match shape " + shape.str());
    }

    void Tensor::fill(float value) noexcept
    {
        std::fill(m_data.begin(), m_data.end(), value);
    }

    Tensor Tensor::reshaped(Shape shape) const
    {
        if (shape.volume() != m_shape.volume())
            fail(ErrorCode::Shape, "cannot reshape " + m_shape.str() + " to " + shape.str());
        return Tensor(shape, m_data);
    }

    bool Tensor::all_finite() const noexcept
    {
        return std::all_of(m_data.begin(), m_data.end(), [](float v) { return std::isfinite(v); });
    }

    float Tensor::min() const
    {
        if (m_data.empty())
            fail(ErrorCode::Shape, "min of empty tensor");
        return *std::min_element(m_data.begin(), m_data.end());
    }

    float Tensor::max() const
    {
        if (m_data.empty())
            fail(ErrorCode::Shape, "max of empty tensor");
        return *std::max_element(m_data.begin(), m_data.end());
    }

    void require_finite(const Tensor &t, const std::string &where)
    {
        if (!t.all_finite())
            fail(ErrorCode::Numeric, "non-finite value produced by " + where);
    }
}
