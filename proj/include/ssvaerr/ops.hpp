#pragma once

#include <array>

#include "ssvaerr/tape.hpp"

namespace ssvaerr::diff {

// Every primitive records forward output and an adjoint on the tape.
// Binary ops accept equal shapes, or one side of size 1 (scalar broadcast);
// anything else requires an explicit reshape first.

NodeId add(Tape& t, NodeId a, NodeId b);
NodeId sub(Tape& t, NodeId a, NodeId b);
NodeId mul(Tape& t, NodeId a, NodeId b);
NodeId div(Tape& t, NodeId a, NodeId b);

NodeId add_scalar(Tape& t, NodeId a, double c);
NodeId mul_scalar(Tape& t, NodeId a, double c);

NodeId relu(Tape& t, NodeId a);
NodeId tanh_op(Tape& t, NodeId a);
NodeId sigmoid(Tape& t, NodeId a);
NodeId square(Tape& t, NodeId a);
NodeId abs_op(Tape& t, NodeId a);
// y = log(max(x, clamp_min)); clamp_min = 0 means no clamping.
NodeId log_op(Tape& t, NodeId a, double clamp_min = 0.0);

NodeId softmax_last(Tape& t, NodeId a);
NodeId l2_normalize_last(Tape& t, NodeId a, double eps = 1e-12);

NodeId matmul(Tape& t, NodeId a, NodeId b);

struct Conv2dSpec {
    std::array<int, 2> stride{1, 1};  // (h, w)
    std::array<int, 2> pad{0, 0};
};
struct Conv3dSpec {
    std::array<int, 3> stride{1, 1, 1};  // (t, h, w)
    std::array<int, 3> pad{0, 0, 0};
};

// Cross-correlation. Output extent per axis: floor((D + 2p - k) / s) + 1.
// conv2d: input [C,H,W], kernel [C',C,kh,kw] -> [C',OH,OW]
// conv3d: input [C,T,H,W], kernel [C',C,kt,kh,kw] -> [C',OT,OH,OW]
NodeId conv2d(Tape& t, NodeId input, NodeId kernel, const Conv2dSpec& spec);
NodeId conv3d(Tape& t, NodeId input, NodeId kernel, const Conv3dSpec& spec);

NodeId sum_all(Tape& t, NodeId a);
NodeId mean_all(Tape& t, NodeId a);
NodeId sum_axis(Tape& t, NodeId a, int axis);
NodeId mean_axis(Tape& t, NodeId a, int axis);

NodeId concat(Tape& t, const std::vector<NodeId>& parts, int axis);
NodeId slice(Tape& t, NodeId a, int axis, int start, int len);
NodeId reshape(Tape& t, NodeId a, std::vector<int> new_shape);

// Per-channel scale+shift over axis 0: y[c,...] = x[c,...] * scale[c] + shift[c].
NodeId channel_affine(Tape& t, NodeId x, NodeId scale, NodeId shift);
// Bias over the last axis: y[...,j] = x[...,j] + b[j].
NodeId add_bias(Tape& t, NodeId x, NodeId b);

} // namespace ssvaerr::diff
