#include <stdexcept>
#include <string>

#include "crdnet/losses.hpp"

namespace crdnet {

void LossConfig::validate() const {
    if (!(lambda >= 0)) throw std::invalid_argument("loss lambda must be non-negative");
    if (patch_size < 1) throw std::invalid_argument("loss patch size must be at least 1");
    if (patch_stride < 1) throw std::invalid_argument("loss patch stride must be at least 1");
}

namespace {

Scalar batch_norm_factor(const Tape& tape, ValueId estimates) {
    return 1.0 / static_cast<Scalar>(tape.value(estimates).shape().n);
}

}  // namespace

ValueId euclidean_loss(Tape& tape, ValueId estimates, ValueId targets) {
    const Scalar inv_m = batch_norm_factor(tape, estimates);
    ValueId diff = tape.sub(estimates, targets);
    return tape.scale(tape.sum_squares(diff), inv_m);
}

ValueId local_count_loss(Tape& tape, ValueId estimates, ValueId targets, int patch_size,
                         int patch_stride) {
    const Scalar inv_m = batch_norm_factor(tape, estimates);
    ValueId diff = tape.sub(estimates, targets);
    ValueId sums = tape.sum_pool(diff, patch_size, patch_stride);
    return tape.scale(tape.abs_sum(sums), inv_m);
}

TotalLoss total_loss(Tape& tape, ValueId estimates, ValueId targets, const LossConfig& cfg) {
    cfg.validate();
    const Scalar inv_m = batch_norm_factor(tape, estimates);
    ValueId diff = tape.sub(estimates, targets);

    TotalLoss out;
    out.euclidean = tape.scale(tape.sum_squares(diff), inv_m);
    out.patch_sums = tape.sum_pool(diff, cfg.patch_size, cfg.patch_stride);
    out.local_count = tape.scale(tape.abs_sum(out.patch_sums), inv_m);
    out.total = cfg.lambda == 0 ? out.euclidean
                                : tape.add(out.euclidean, tape.scale(out.local_count, cfg.lambda));
    return out;
}

LossReport make_report(const Tape& tape, const TotalLoss& loss) {
    LossReport r;
    r.euclidean = tape.scalar_value(loss.euclidean);
    r.local_count = tape.scalar_value(loss.local_count);
    r.total = tape.scalar_value(loss.total);
    r.patch_count_errors = tape.value(loss.patch_sums);
    return r;
}

}  // namespace crdnet
