#include "dcr/fcm.hpp"

#include <stdexcept>

namespace dcr {

CompensatedSet compensate(const Eigen::VectorXd& feature, int label,
                          const ClassStats& stats) {
    if (label < 0 || label >= stats.num_classes())
        throw std::invalid_argument("compensate: label out of range");
    if (feature.size() != stats.dim())
        throw std::invalid_argument("compensate: feature dimension mismatch");

    CompensatedSet set;
    set.base_label = label;

    if (!stats.is_tail(label)) {
        set.modes.push_back({label, feature, 1.0});
        return set;
    }

    const TailDrift& entry = *stats.drift[static_cast<std::size_t>(label)];
    set.modes.reserve(entry.neighbors.size() + 1);
    for (std::size_t i = 0; i < entry.neighbors.size(); ++i)
        set.modes.push_back(
            {entry.neighbors[i],
             feature + entry.offsets.row(static_cast<Eigen::Index>(i)).transpose(),
             entry.probs[static_cast<Eigen::Index>(i)]});
    // Retain mode: zero offset, original feature unchanged.
    set.modes.push_back({label, feature, entry.probs[entry.probs.size() - 1]});
    return set;
}

}  // namespace dcr
