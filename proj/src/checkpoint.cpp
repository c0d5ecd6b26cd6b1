#include "rfsv/checkpoint.hpp"
#include "rfsv/error.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace rfsv
{
    namespace
    {
        constexpr std::array<char, 5> magic { 'R', 'F', 'S', 'V', '1' };

        void put_u32(std::ofstream &out, std::uint32_t v)
        {
            const unsigned char bytes[4] = { static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v >> 16),
                    static_cast<unsigned char>(v >> 24) };
            out.write(reinterpret_cast<const char*>(bytes), 4);
        }

        std::uint32_t get_u32(std::ifstream &in, const std::filesystem::path &path)
        {
            unsigned char bytes[4];
            if (!in.read(reinterpret_cast<char*>(bytes), 4))
                fail(ErrorCode::Data, "truncated checkpoint " + path.string());
            return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) | (static_cast<std::uint32_t>(bytes[2]) << 16)
                    | (static_cast<std::uint32_t>(bytes[3]) << 24);
        }
    }

    void write_container(const std::filesystem::path &path, const std::vector<NamedTensor> &entries)
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
        out.write(magic.data(), magic.size());
        put_u32(out, static_cast<std::uint32_t>(entries.size()));
        for (const auto &e : entries)
        {
            put_u32(out, static_cast<std::uint32_t>(e.name.size()));
            out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
            const Shape s = e.tensor.shape();
            put_u32(out, s.n);
            put_u32(out, s.c);
            put_u32(out, s.h);
            put_u32(out, s.w);
            for (float v : e.tensor.values())
                put_u32(out, std::bit_cast<std::uint32_t>(v));
        }
        if (!out)
            fail(ErrorCode::Io, "failed writing " + path.string());
    }

    std::vector<NamedTensor> read_container(const std::filesystem::path &path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            fail(ErrorCode::Io, "cannot open checkpoint " + path.string());
        std::array<char, 5> head {};
        if (!in.read(head.data(), head.size()) || head != magic)
            fail(ErrorCode::Data, path.string() + " is not an RFSV1 container");
        const std::uint32_t count = get_u32(in, path);
        std::vector<NamedTensor> entries;
        entries.reserve(count);
        for (std::uint32_t i = 0; i < count; i++)
        {
            NamedTensor e;
            e.name.resize(get_u32(in, path));
            if (!in.read(e.name.data(), static_cast<std::streamsize>(e.name.size())))
                fail(ErrorCode::Data, "truncated checkpoint " + path.string());
            Shape s;
            s.n = static_cast<int>(get_u32(in, path));
            s.c = static_cast<int>(get_u32(in, path));
            s.h = static_cast<int>(get_u32(in, path));
            s.w = static_cast<int>(get_u32(in, path));
            std::vector<float> data(s.volume());
            for (auto &v : data)
                v = std::bit_cast<float>(get_u32(in, path));
            e.tensor = Tensor(s, std::move(data));
            entries.push_back(std::move(e));
        }
        return entries;
    }

    std::vector<NamedTensor> model_entries(const Model &model)
    {
        const std::string text = to_text(model.spec);
        std::vector<float> bytes(text.size());
        for (std::size_t i = 0; i < text.size(); i++)
            bytes[i] = static_cast<float>(static_cast<unsigned char>(text[i]));
        std::vector<NamedTensor> entries;
        const int length = static_cast<int>(bytes.size());
        entries.push_back({ "meta.network", Tensor(Shape { 1, 1, 1, length }, std::move(bytes)) });
        for (std::size_t i = 0; i < model.params.size(); i++)
        {
            if (!model.params[i].weight.empty())
                entries.push_back({ "node" + std::to_string(i) + ".weight", model.params[i].weight });
            if (!model.params[i].bias.empty())
                entries.push_back({ "node" + std::to_string(i) + ".bias", model.params[i].bias });
        }
        return entries;
    }

    Model model_from_entries(const std::vector<NamedTensor> &entries)
    {
        if (entries.empty() || entries.front().name != "meta.network")
            fail(ErrorCode::Data, "checkpoint has no network description");
        std::string text;
        for (float v : entries.front().tensor.values())
            text.push_back(static_cast<char>(static_cast<unsigned char>(v)));
        Model model;
        model.spec = parse_network(text);
        model.params.resize(model.spec.layers.size());
        for (std::size_t e = 1; e < entries.size(); e++)
        {
            const std::string &name = entries[e].name;
            const auto dot = name.find('.');
            if (name.rfind("node", 0) != 0 || dot == std::string::npos)
                fail(ErrorCode::Data, "unexpected checkpoint entry '" + name + "'");
            const std::size_t node = std::stoul(name.substr(4, dot - 4));
            if (node >= model.params.size())
                fail(ErrorCode::Data, "checkpoint entry '" + name + "' beyond network size");
            const std::string field = name.substr(dot + 1);
            if (field == "weight")
                model.params[node].weight = entries[e].tensor;
            else if (field == "bias")
                model.params[node].bias = entries[e].tensor;
            else
                fail(ErrorCode::Data, "unexpected checkpoint entry '" + name + "'");
        }
        for (std::size_t i = 0; i < model.params.size(); i++)
        {
            const LayerSpec &l = model.spec.layers[i];
            if (!l.has_params())
                continue;
            if (model.params[i].weight.shape() != weight_shape(l) || (l.bias && model.params[i].bias.shape() != bias_shape(l)))
                fail(ErrorCode::Shape, "checkpoint parameters of node " + std::to_string(i) + " do not match " + l.describe());
        }
        return model;
    }

    void save_model(const std::filesystem::path &path, const Model &model)
    {
        write_container(path, model_entries(model));
    }

    Model load_model(const std::filesystem::path &path)
    {
        return model_from_entries(read_container(path));
    }

    void load_backbone(Model &target, const Model &source)
    {
        const int extractor = target.spec.head_start;
        if (extractor < 0 || source.spec.head_start != extractor)
            fail(ErrorCode::Shape, "base checkpoint feature extractor (" + std::to_string(source.spec.head_start) + " nodes) does not match backbone ("
                    + std::to_string(extractor) + " nodes)");
        for (int i = 0; i < extractor; i++)
        {
            const LayerSpec &a = target.spec.layers[i];
            if (a.kind != source.spec.layers[i].kind)
                fail(ErrorCode::Shape, "base checkpoint node " + std::to_string(i) + " is " + kind_name(source.spec.layers[i].kind) + ", backbone has "
                        + kind_name(a.kind));
            if (!a.has_params())
                continue;
            const LayerParams &src = source.params[i];
            if (src.weight.shape() != target.params[i].weight.shape() || src.bias.shape() != target.params[i].bias.shape())
                fail(ErrorCode::Shape, "base checkpoint node " + std::to_string(i) + " (" + a.describe() + ") has shape " + src.weight.shape().str()
                        + ", backbone expects " + target.params[i].weight.shape().str());
            target.params[i] = src;
        }
    }
}
