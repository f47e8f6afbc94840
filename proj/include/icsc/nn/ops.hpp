#pragma once

#include "icsc/nn/tape.hpp"

// Differentiable ops recorded on a Tape. Feature maps are [C, H, W].

namespace icsc::nn {

/// Stride-1 convolution with zero "same" padding. weight [OC, C, K, K] with K
/// odd, bias [OC].
Var conv2d(Tape& tape, Var input, Var weight, Var bias);

Var relu(Tape& tape, Var input);

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
Var maxpool2(Tape& tape, Var input);

/// Reshape to rank 1.
Var flatten(Tape& tape, Var input);

/// weight [M, N] times a rank-1 input of length N, plus bias [M].
Var dense(Tape& tape, Var input, Var weight, Var bias);

}  // namespace icsc::nn
