#pragma once

#include <functional>
#include <vector>

#include "crdnet/tensor.hpp"

namespace crdnet {

// Handle into a Tape's node list.
using ValueId = int;

struct ConvSpec {
    int stride = 1;
    int padding = 0;
    int dilation = 1;
};

// Records every differentiable operation of one forward pass in execution
// order; backward() replays the record in exact reverse and accumulates
// parameter gradients. A tape is single-use: record, backward once, discard.
class Tape {
public:
    // Leaf that never receives gradients.
    ValueId constant(Tensor t);

    // Leaf bound to a parameter. The value is snapshotted; after backward()
    // the node gradient is accumulated into p.grad(). trainable=false records
    // the value as a plain constant, cutting gradient flow at this point.
    ValueId leaf(Parameter& p, bool trainable = true);

    // Cross-correlation with bias, weight layout (out_ch, in_ch, kh, kw).
    ValueId conv2d(ValueId x, ValueId w, ValueId b, ConvSpec spec = {});
    ValueId conv2d(ValueId x, Parameter& w, Parameter& b, ConvSpec spec = {}, bool trainable = true);

    ValueId relu(ValueId x);

    // 2x2 non-overlapping max; gradient routes to the first-occurrence argmax.
    ValueId maxpool2(ValueId x);

    // Half-pixel-center bilinear upsampling by an integer factor >= 1.
    ValueId upsample_bilinear(ValueId x, int factor);

    ValueId concat_channels(ValueId a, ValueId b);

    ValueId add(ValueId a, ValueId b);
    ValueId sub(ValueId a, ValueId b);
    ValueId scale(ValueId x, Scalar s);

    // Reductions to a (1,1,1,1) scalar node, fixed row-major accumulation.
    ValueId sum(ValueId x);
    ValueId sum_squares(ValueId x);
    ValueId abs_sum(ValueId x);  // subgradient of |.| at 0 is 0

    // Valid (no padding) patch sums: every patch x patch window anchored on
    // the stride grid, summed per channel.
    ValueId sum_pool(ValueId x, int patch, int stride);

    const Tensor& value(ValueId id) const;
    Scalar scalar_value(ValueId id) const;

    // Reverse sweep from a scalar root. Errors on a non-scalar root and on a
    // second call without re-recording.
    void backward(ValueId root);

    // Node gradient after backward; nullptr if none was propagated there.
    const Tensor* node_grad(ValueId id) const;

    int size() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        Parameter* param = nullptr;
        std::function<void(Tape&, Node&)> backprop;
    };

    ValueId push(Node n);
    Node& node(ValueId id) { return nodes_[id]; }
    const Node& node(ValueId id) const { return nodes_[id]; }
    Tensor& grad_buf(ValueId id);
    bool wants_grad(ValueId id) const { return nodes_[id].requires_grad; }

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

// Stacks same-shaped (1,c,h,w) tensors into one (n,c,h,w) batch.
Tensor stack_batch(const std::vector<Tensor>& items);

// Forward-only bilinear upsampling on raw tensors; the tape op and the
// training-target construction share this one linear map.
Tensor upsample_bilinear_tensor(const Tensor& in, int factor);

}  // namespace crdnet
