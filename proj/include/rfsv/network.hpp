#pragma once

#include "rfsv/layers.hpp"
#include "rfsv/tensor.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace rfsv
{
    /// Classifier design: a single FC after global pooling, or the multi-FC
    /// design with ReLU and dropout between the FC layers.
    enum class HeadType
    {
        ResNet,
        Vgg
    };

    std::string head_name(HeadType type);
    HeadType parse_head(const std::string &name);

    struct AuxBranch
    {
        int target_ordinal = 0;  ///< conv ordinal the branch supervises
        int tap_node = -1;       ///< node whose output feeds the branch
        int first_node = -1;     ///< first node of the branch
        int output_node = -1;    ///< branch logits
        HeadType type = HeadType::ResNet;
    };

    /**
     * A feed-forward graph stored in topological order. Every node names its
     * producer explicitly; AddSkip nodes also name a second operand. Auxiliary
     * branches hang off the main path and are appended after it.
     */
    struct NetworkSpec
    {
        std::string arch = "custom";
        double scale = 1.0;
        int input_channels = 3;
        int input_h = 224;
        int input_w = 224;
        int num_classes = 2;
        HeadType head = HeadType::ResNet;
        std::vector<LayerSpec> layers;
        int main_output = -1;
        /// Node whose output the main head globally pools (class-activation features).
        int features = -1;
        /// First node of the main classifier head.
        int head_start = -1;
        std::vector<AuxBranch> aux;
        /// Named handles for conv ordinals, e.g. {"L28", 9}.
        std::vector<std::pair<std::string, int>> labels;

        Shape input_shape(int batch = 1) const
        {
            return { batch, input_channels, input_h, input_w };
        }
        int conv_count() const;
        /// Node index of the conv with this ordinal; throws E_CONFIG if absent.
        int conv_node(int ordinal) const;
        /// Node carrying the activated output of the conv with this ordinal
        /// (the ReLU that consumes it, when there is one).
        int activation_node(int ordinal) const;
        /// Ordinal for a handle: a label ("L28"), "#9", or a bare number.
        int resolve(const std::string &handle) const;
        /// Preferred label of an ordinal, falling back to "#<ordinal>".
        std::string label(int ordinal) const;
        std::vector<int> conv_ordinals() const;
    };

    /// Shape of every node output for a given batch; validates the whole graph.
    std::vector<Shape> infer_shapes(const NetworkSpec &net, int batch = 1);
    void validate(const NetworkSpec &net);

    /// Line-oriented description, e.g. `layer kind=conv3x3 in=64 out=128 stride=1 pad=1`.
    std::string to_text(const NetworkSpec &net);
    NetworkSpec parse_network(const std::string &text);

    struct Model
    {
        NetworkSpec spec;
        std::vector<LayerParams> params;

        std::size_t parameter_count() const;
    };

    /// He-initialised weights, zero biases, identity channel scales.
    Model init_model(const NetworkSpec &net, std::uint64_t seed);
    /// Re-draw parameters for nodes in [first, last) only.
    void reinit_nodes(Model &model, int first, int last, std::uint64_t seed);

    struct ForwardCache
    {
        Tensor input;
        std::vector<Tensor> outputs;
        RunContext ctx;
        /// Nodes [0, computed) hold valid outputs.
        int computed = 0;
    };

    /// Runs nodes [0, upto] (all when upto < 0). Aux-branch nodes are skipped
    /// when `with_aux` is false.
    ForwardCache forward(const Model &model, const Tensor &input, const RunContext &ctx = {}, int upto = -1, bool with_aux = true);

    struct Gradients
    {
        std::vector<LayerParams> params;
        Tensor input;
    };

    /// Seed gradients for chosen node outputs.
    using GradSeeds = std::vector<std::pair<int, Tensor>>;

    /// Reverse pass over a cache produced by forward(); throws E_STATE when a
    /// seeded node was not computed.
    Gradients backward(const Model &model, const ForwardCache &cache, const GradSeeds &seeds, BackwardOptions options = {});
}
