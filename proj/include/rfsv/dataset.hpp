#pragma once

#include "rfsv/rng.hpp"
#include "rfsv/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rfsv
{
    struct Sample
    {
        std::string filename;
        int label = 0;
    };

    /// Layout: root/{train,val,test}.csv (filename,label) and root/images/.
    struct DatasetSpec
    {
        std::filesystem::path root;
        std::vector<Sample> train;
        std::vector<Sample> val;
        std::vector<Sample> test;
        int image_h = 224;
        int image_w = 224;
        int num_classes = 2;

        const std::vector<Sample>& split(const std::string &name) const;
    };

    /// Reads the manifests. Missing CSVs give empty splits. `num_classes` <= 0
    /// infers max(label)+1 (at least 2). Throws E_DATA on out-of-range labels or
    /// a filename shared between splits.
    DatasetSpec load_dataset_spec(const std::filesystem::path &root, int image_size = 224, int num_classes = 0);
    std::vector<Sample> read_manifest(const std::filesystem::path &csv);
    void write_manifest(const std::filesystem::path &csv, const std::vector<Sample> &samples);

    /// Images in [0,1], [1,3,H,W] at the dataset size.
    struct LoadedSplit
    {
        std::vector<Tensor> images;
        std::vector<int> labels;
        std::vector<std::string> names;

        std::size_t size() const noexcept
        {
            return images.size();
        }
    };

    /// Decodes every image of a split and bicubic-resizes it when its size differs.
    LoadedSplit load_split(const DatasetSpec &spec, const std::string &split);
    LoadedSplit load_samples(const DatasetSpec &spec, const std::vector<Sample> &samples);

    /// Network input normalisation: (x - 0.5) / 0.25 per value.
    Tensor normalize_input(const Tensor &image);
    /// Stacks [1,C,H,W] images into one [N,C,H,W] batch, normalising each.
    Tensor make_batch(const std::vector<Tensor> &images);

    struct SynthParams
    {
        int n = 100;
        std::uint64_t seed = 0;
        int image_size = 96;
        double radius_min = 10.0;
        double radius_max = 16.0;
        /// Lesion colour weight at the core; edges fade over a quarter radius.
        double contrast = 0.6;
        double train_fraction = 0.5;
        double val_fraction = 0.25;
    };

    struct PlantedLesion
    {
        std::string filename;
        int label = 0;
        double radius = 0.0;
        double cy = 0.0;
        double cx = 0.0;
    };

    struct SynthResult
    {
        DatasetSpec spec;
        std::vector<PlantedLesion> truth;

        /// Mean planted diameter over positive images.
        double mean_diameter() const;
    };

    /// Renders one image; label 1 plants a lesion. Pure function of its arguments.
    Tensor render_lesion_image(int size, int label, Rng &rng, const SynthParams &params, PlantedLesion &planted);
    /// Writes root/images/*.ppm, train/val/test.csv and truth.csv (filename,label,radius,cy,cx).
    /// Labels alternate so classes are balanced; split membership is a seeded shuffle.
    SynthResult synth_dataset(const std::filesystem::path &root, const SynthParams &params);
}
