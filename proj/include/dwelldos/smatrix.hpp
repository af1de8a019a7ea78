#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dwelldos {

/// Flux-normalized scattering matrix. Column n is the incoming channel,
/// row m the outgoing one; both index into `channels`.
struct SMatrix {
    std::vector<std::string> channels;
    Eigen::MatrixXcd s;

    double unitarity_defect() const {
        const auto n = s.cols();
        return (s.adjoint() * s - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff();
    }

    double reciprocity_defect() const { return (s - s.transpose()).cwiseAbs().maxCoeff(); }
};

}  // namespace dwelldos
