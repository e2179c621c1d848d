#ifndef DCR_FCM_HPP
#define DCR_FCM_HPP

#include <Eigen/Dense>

#include <vector>

#include "dcr/stats.hpp"

namespace dcr {

/// One drift-compensated variant of a training feature.
struct CompensatedMode {
    int mode_class;           // the head class drifted toward, or the label itself
    Eigen::VectorXd feature;  // f + offset
    double prob;
};

/// All compensated variants of one training feature. Neighbor modes come
/// first (descending similarity), the retain mode last; probabilities sum
/// to 1 and the retain mode keeps the input feature bit-exactly.
struct CompensatedSet {
    int base_label;
    std::vector<CompensatedMode> modes;
};

/// Expands a tail-class feature into its drift-compensated variants. Head
/// features pass through as a single retain mode with probability 1.
/// Applied during training only; test features are never compensated.
CompensatedSet compensate(const Eigen::VectorXd& feature, int label,
                          const ClassStats& stats);

}  // namespace dcr

#endif  // DCR_FCM_HPP
