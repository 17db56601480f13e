#pragma once

#include <vector>

#include "crdnet/tape.hpp"

namespace crdnet {

struct LossConfig {
    Scalar lambda = 1e-4;
    int patch_size = 32;
    int patch_stride = 16;

    void validate() const;
};

// Batched losses over (M,1,H,W) estimate/target pairs, normalized by M.
// Euclidean: mean over the batch of the per-image sum of squared pixel
// differences. Local count: mean over the batch of the summed absolute
// patch-count errors, patches of size h on a stride-t anchor grid, anchors
// kept only where the full patch fits (no padding).
ValueId euclidean_loss(Tape& tape, ValueId estimates, ValueId targets);
ValueId local_count_loss(Tape& tape, ValueId estimates, ValueId targets, int patch_size,
                         int patch_stride);

struct TotalLoss {
    ValueId euclidean = -1;
    ValueId local_count = -1;
    ValueId patch_sums = -1;  // per-anchor count errors, (M,1,grid_h,grid_w)
    ValueId total = -1;
};

// total = euclidean + lambda * local_count; when lambda is zero the total IS
// the euclidean node, so the two are equal bit for bit.
TotalLoss total_loss(Tape& tape, ValueId estimates, ValueId targets, const LossConfig& cfg);

struct LossReport {
    Scalar euclidean = 0;
    Scalar local_count = 0;
    Scalar total = 0;
    Tensor patch_count_errors;  // (M,1,grid_h,grid_w)
};

LossReport make_report(const Tape& tape, const TotalLoss& loss);

}  // namespace crdnet
