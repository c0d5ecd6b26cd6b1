#include "rfsv/image_io.hpp"
#include "rfsv/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace rfsv
{
    namespace
    {
        int read_header_int(std::istream &in, const std::filesystem::path &path)
        {
            int c = in.peek();
            while (c != EOF)
            {
                if (std::isspace(c))
                {
                    in.get();
                }
                else if (c == '#')
                {
                    std::string comment;
                    std::getline(in, comment);
                }
                else
                    break;
                c = in.peek();
            }
            int value = -1;
            if (!(in >> value))
                fail(ErrorCode::Data, "malformed PNM header in " + path.string());
            return value;
        }
    }

    Tensor read_pnm(const std::filesystem::path &path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            fail(ErrorCode::Io, "cannot open image " + path.string());
        char magic[2] = {};
        in.read(magic, 2);
        if (magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
            fail(ErrorCode::Data, path.string() + " is not a binary PGM/PPM image");
        const int channels = magic[1] == '6' ? 3 : 1;
        const int w = read_header_int(in, path);
        const int h = read_header_int(in, path);
        const int maxval = read_header_int(in, path);
        if (w < 1 || h < 1 || maxval < 1 || maxval > 255)
            fail(ErrorCode::Data, "unsupported PNM geometry or depth in " + path.string());
        in.get();
        std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * channels);
        if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size())))
            fail(ErrorCode::Data, "truncated image data in " + path.string());
        Tensor t(Shape { 1, channels, h, w });
        const float scale = 1.0f / static_cast<float>(maxval);
        for (int y = 0; y < h; y++)
            for (int x = 0; x < w; x++)
                for (int c = 0; c < channels; c++)
                    t.at(0, c, y, x) = bytes[(static_cast<std::size_t>(y) * w + x) * channels + c] * scale;
        return t;
    }

    void write_pnm(const std::filesystem::path &path, const Tensor &image)
    {
        const Shape s = image.shape();
        if (s.n != 1 || (s.c != 1 && s.c != 3))
            fail(ErrorCode::Shape, "write_pnm expects [1,1|3,H,W], got " + s.str());
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
        out << (s.c == 3 ? "P6" : "P5") << "\n" << s.w << " " << s.h << "\n255\n";
        std::vector<unsigned char> bytes(s.volume());
        for (int y = 0; y < s.h; y++)
            for (int x = 0; x < s.w; x++)
                for (int c = 0; c < s.c; c++)
                {
                    const float v = std::clamp(image.at(0, c, y, x), 0.0f, 1.0f);
                    bytes[(static_cast<std::size_t>(y) * s.w + x) * s.c + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
                }
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out)
            fail(ErrorCode::Io, "failed writing " + path.string());
    }

    Tensor overlay_heatmap(const Tensor &image, const Tensor &map, float alpha)
    {
        const Shape s = image.shape();
        if (s.c != 3 || map.shape().h != s.h || map.shape().w != s.w)
            fail(ErrorCode::Shape, "overlay_heatmap: image " + s.str() + " and map " + map.shape().str() + " differ");
        Tensor out = image;
        for (int y = 0; y < s.h; y++)
            for (int x = 0; x < s.w; x++)
            {
                const float v = std::clamp(map.at(0, 0, y, x), 0.0f, 1.0f);
                const float rgb[3] = { std::clamp(1.5f - std::abs(4.0f * v - 3.0f), 0.0f, 1.0f), std::clamp(1.5f - std::abs(4.0f * v - 2.0f), 0.0f,
                        1.0f), std::clamp(1.5f - std::abs(4.0f * v - 1.0f), 0.0f, 1.0f) };
                for (int c = 0; c < 3; c++)
                    out.at(0, c, y, x) = (1.0f - alpha) * image.at(0, c, y, x) + alpha * rgb[c];
            }
        return out;
    }

    void draw_box(Tensor &image, int top, int left, int height, int width, float r, float g, float b)
    {
        const Shape s = image.shape();
        const float color[3] = { r, g, b };
        auto put = [&](int y, int x) {
            if (y < 0 || y >= s.h || x < 0 || x >= s.w)
                return;
            for (int c = 0; c < std::min(3, s.c); c++)
                image.at(0, c, y, x) = color[c];
        };
        for (int x = left; x < left + width; x++)
        {
            put(top, x);
            put(top + height - 1, x);
        }
        for (int y = top; y < top + height; y++)
        {
            put(y, left);
            put(y, left + width - 1);
        }
    }
}
