#pragma once

#include "rfsv/network.hpp"
#include "rfsv/tensor.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace rfsv
{
    /*
     * RFSV1 container, all integers little-endian:
     *
     *   bytes 0..4   magic "RFSV1"
     *   u32          entry count
     *   per entry:
     *     u32        name length in bytes, then the UTF-8 name
     *     u32 x 4    shape n, c, h, w
     *     f32 x nchw payload, IEEE-754 binary32 little-endian
     *
     * Models store their graph as an entry "meta.network" whose payload holds
     * the bytes of the text description (one byte value per f32), followed by
     * "node<i>.weight" / "node<i>.bias" for every parameterised node.
     */
    struct NamedTensor
    {
        std::string name;
        Tensor tensor;
    };

    void write_container(const std::filesystem::path &path, const std::vector<NamedTensor> &entries);
    std::vector<NamedTensor> read_container(const std::filesystem::path &path);

    std::vector<NamedTensor> model_entries(const Model &model);
    Model model_from_entries(const std::vector<NamedTensor> &entries);

    void save_model(const std::filesystem::path &path, const Model &model);
    Model load_model(const std::filesystem::path &path);

    /// Copy the feature-extractor parameters (nodes before the main head) of
    /// `source` into `target`; heads and aux branches keep their own values.
    /// Throws E_SHAPE when the extractors differ.
    void load_backbone(Model &target, const Model &source);
}
