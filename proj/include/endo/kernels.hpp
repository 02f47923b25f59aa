#pragma once

#include <cstdint>
#include <vector>

#include "endo/tensor.hpp"

// Layer kernels of the segmentation network. The functions in endo::kernels are
// the builds used for training and inference: OpenMP loops, with the 3x3
// convolutions lowered to one BLAS GEMM per call; endo::kernels::ref holds
// straightforward serial versions with identical signatures, kept to test the
// optimized ones against and as the baseline in the kernel benchmark.
//
// Weight layouts:
//   conv3x3   [cout][cin][3][3], zero "same" padding
//   conv1x1   [cout][cin]
//   upconv2x2 [cin][cout][2][2], stride 2 transposed convolution
// An empty bias vector means no bias.
namespace endo::kernels {

template <typename T>
Tensor4<T> conv3x3_forward(const Tensor4<T>& in, const std::vector<T>& weight, const std::vector<T>& bias, int cout);
/// Accumulates into grad_weight / grad_bias; writes grad_in when non-null.
template <typename T>
void conv3x3_backward(const Tensor4<T>& in, const std::vector<T>& weight, const Tensor4<T>& grad_out, Tensor4<T>* grad_in,
                      std::vector<T>& grad_weight, std::vector<T>* grad_bias);

template <typename T>
Tensor4<T> conv1x1_forward(const Tensor4<T>& in, const std::vector<T>& weight, const std::vector<T>& bias, int cout);
template <typename T>
void conv1x1_backward(const Tensor4<T>& in, const std::vector<T>& weight, const Tensor4<T>& grad_out, Tensor4<T>* grad_in,
                      std::vector<T>& grad_weight, std::vector<T>* grad_bias);

template <typename T>
Tensor4<T> upconv2x2_forward(const Tensor4<T>& in, const std::vector<T>& weight, const std::vector<T>& bias, int cout);
template <typename T>
void upconv2x2_backward(const Tensor4<T>& in, const std::vector<T>& weight, const Tensor4<T>& grad_out, Tensor4<T>* grad_in,
                        std::vector<T>& grad_weight, std::vector<T>* grad_bias);

/// 2x2 max pooling, stride 2. argmax receives the winning offset (0..3) per output.
template <typename T>
Tensor4<T> maxpool2x2_forward(const Tensor4<T>& in, std::vector<std::uint8_t>& argmax);
template <typename T>
Tensor4<T> maxpool2x2_backward(const Tensor4<T>& grad_out, const std::vector<std::uint8_t>& argmax, int in_h, int in_w);

/// Per-sample, per-channel normalization over the spatial plane, no affine.
/// In place; inv_std receives 1/sqrt(var + eps) per (n, c).
template <typename T>
void instance_norm_forward(Tensor4<T>& x, std::vector<T>& inv_std, T eps);
/// grad is replaced by the gradient w.r.t. the pre-normalization input; y is the
/// normalized forward output.
template <typename T>
void instance_norm_backward(const Tensor4<T>& y, const std::vector<T>& inv_std, Tensor4<T>& grad);

template <typename T>
void leaky_relu_forward(Tensor4<T>& x, T slope);
/// pre is the activation input.
template <typename T>
void leaky_relu_backward(const Tensor4<T>& pre, Tensor4<T>& grad, T slope);

namespace ref {

template <typename T>
Tensor4<T> conv3x3_forward(const Tensor4<T>& in, const std::vector<T>& weight, const std::vector<T>& bias, int cout);
template <typename T>
void conv3x3_backward(const Tensor4<T>& in, const std::vector<T>& weight, const Tensor4<T>& grad_out, Tensor4<T>* grad_in,
                      std::vector<T>& grad_weight, std::vector<T>* grad_bias);
template <typename T>
Tensor4<T> upconv2x2_forward(const Tensor4<T>& in, const std::vector<T>& weight, const std::vector<T>& bias, int cout);
template <typename T>
void upconv2x2_backward(const Tensor4<T>& in, const std::vector<T>& weight, const Tensor4<T>& grad_out, Tensor4<T>* grad_in,
                        std::vector<T>& grad_weight, std::vector<T>* grad_bias);
template <typename T>
void instance_norm_forward(Tensor4<T>& x, std::vector<T>& inv_std, T eps);
template <typename T>
void instance_norm_backward(const Tensor4<T>& y, const std::vector<T>& inv_std, Tensor4<T>& grad);

}  // namespace ref
}  // namespace endo::kernels
