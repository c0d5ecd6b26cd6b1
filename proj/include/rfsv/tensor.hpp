#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rfsv
{
    /// [batch, channels, height, width]
    struct Shape
    {
        int n = 0;
        int c = 0;
        int h = 0;
        int w = 0;

        std::size_t volume() const noexcept
        {
            return static_cast<std::size_t>(n) * c * h * w;
        }
        std::size_t plane() const noexcept
        {
            return static_cast<std::size_t>(h) * w;
        }
        friend bool operator==(const Shape&, const Shape&) = default;
        std::string str() const;
    };

    /// Dense rank-4 float tensor, row-major NCHW.
    class Tensor
    {
    public:
        Tensor() = default;
        explicit Tensor(Shape shape, float fill = 0.0f);
        Tensor(Shape shape, std::vector<float> data);
        Tensor(int n, int c, int h, int w, float fill = 0.0f) :
                Tensor(Shape { n, c, h, w }, fill)
        {
        }

        const Shape& shape() const noexcept
        {
            return m_shape;
        }
        std::size_t size() const noexcept
        {
            return m_data.size();
        }
        bool empty() const noexcept
        {
            return m_data.empty();
        }

        float* data() noexcept
        {
            return m_data.data();
        }
        const float* data() const noexcept
        {
            return m_data.data();
        }
        std::span<float> values() noexcept
        {
            return m_data;
        }
        std::span<const float> values() const noexcept
        {
            return m_data;
        }

        float& at(int n, int c, int y, int x) noexcept
        {
            return m_data[index(n, c, y, x)];
        }
        float at(int n, int c, int y, int x) const noexcept
        {
            return m_data[index(n, c, y, x)];
        }
        float& operator[](std::size_t i) noexcept
        {
            return m_data[i];
        }
        float operator[](std::size_t i) const noexcept
        {
            return m_data[i];
        }

        /// Pointer to the start of plane (n, c).
        float* plane(int n, int c) noexcept
        {
            return m_data.data() + (static_cast<std::size_t>(n) * m_shape.c + c) * m_shape.plane();
        }
        const float* plane(int n, int c) const noexcept
        {
            return m_data.data() + (static_cast<std::size_t>(n) * m_shape.c + c) * m_shape.plane();
        }

        void fill(float value) noexcept;
        Tensor reshaped(Shape shape) const;
        bool all_finite() const noexcept;
        float min() const;
        float max() const;

        friend bool operator==(const Tensor &a, const Tensor &b)
        {
            return a.m_shape == b.m_shape && a.m_data == b.m_data;
        }

    private:
        std::size_t index(int n, int c, int y, int x) const noexcept
        {
            return ((static_cast<std::size_t>(n) * m_shape.c + c) * m_shape.h + y) * m_shape.w + x;
        }

        Shape m_shape;
        std::vector<float> m_data;
    };

    /// Throws E_NUMERIC naming `where` if any element is NaN or Inf.
    void require_finite(const Tensor &t, const std::string &where);
}
