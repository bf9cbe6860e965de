#pragma once

#include <complex>
#include <cstdint>

#include <Eigen/Core>

namespace s4drc {

using Index = Eigen::Index;

/* Multichannel signals are stored channels x time, row-major, so that each
 * channel's time series is contiguous. A column is one frame. */
template <typename Scalar>
using Signal = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/* Per-channel, per-mode complex parameters: channels x modes. */
template <typename Scalar>
using ModeMatrix =
    Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using SignalRef = Eigen::Ref<Signal<Scalar>>;

template <typename Scalar>
using ConstSignalRef = Eigen::Ref<const Signal<Scalar>>;

}  // namespace s4drc
