/**
 * \file network.hpp
 * \brief Reduced encoder-decoder feature network with hand-written reverse mode.
 *
 * Each encoder/decoder block is (3x3 conv, batch norm, ReLU) applied twice.
 * Encoder block i runs at 1/2^i resolution (2x2 max-pooling between blocks).
 * Decoder block 0 runs on the deepest encoder output; decoder block j > 0
 * bilinearly upsamples the previous decoder output by 2 and concatenates the
 * matching encoder output (U-Net skip). Two 1x1 heads on the last decoder
 * output give the detector (1 channel) and weight (3 channel) scores. The
 * descriptor map is the concatenation of all encoder outputs resized to the
 * input resolution.
 */
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hero/scan.hpp"

namespace hero {

/// Channel-by-pixel activations; row c holds channel c in row-major pixel order.
using Act = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/** \brief Feature map with its spatial shape */
struct Tensor {
  int height = 0;
  int width = 0;
  Act data;  ///< channels x (height * width)

  Tensor() = default;
  Tensor(int channels, int h, int w) : height(h), width(w), data(Act::Zero(channels, h * w)) {}
  int channels() const { return static_cast<int>(data.rows()); }
  double& at(int c, int y, int x) { return data(c, y * width + x); }
  double at(int c, int y, int x) const { return data(c, y * width + x); }
};

/** \brief Architecture hyperparameters; serialised as JSON in checkpoints */
struct Architecture {
  int in_channels = 1;
  std::vector<int> encoder_channels{8, 16};
  int cell_size = 32;
  double temperature = 100.0;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  int num_blocks() const { return static_cast<int>(encoder_channels.size()); }
  int descriptor_dim() const;
  /** \brief Input side length must be a multiple of this */
  int size_divisor() const { return 1 << num_blocks(); }

  std::string to_json() const;
  static Architecture from_json(const std::string& text);
  bool operator==(const Architecture&) const = default;
};

/** \brief Slice of the flat parameter vector owned by one layer */
struct ParamSlice {
  std::size_t offset = 0;
  std::size_t size = 0;
};

struct ConvSpec {
  int cin = 0, cout = 0, kernel = 3;
  ParamSlice weight;
  ParamSlice bias;  ///< empty when the conv feeds batch norm
};

struct NormSpec {
  int channels = 0;
  ParamSlice gamma, beta;
  ParamSlice running_mean, running_var;  ///< offsets into the buffer vector
};

struct BlockSpec {
  ConvSpec conv1, conv2;
  NormSpec norm1, norm2;
};

/** \brief Learnable parameters theta plus batch-norm running statistics */
class FeatureModel {
 public:
  explicit FeatureModel(Architecture arch);

  /** \brief He-normal conv kernels, unit BN scale, zero biases; deterministic in seed */
  static FeatureModel random(const Architecture& arch, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  std::size_t num_params() const { return params_.size(); }
  std::size_t num_buffers() const { return buffers_.size(); }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::VectorXd& buffers() { return buffers_; }
  const Eigen::VectorXd& buffers() const { return buffers_; }

  const std::vector<BlockSpec>& encoder() const { return encoder_; }
  const std::vector<BlockSpec>& decoder() const { return decoder_; }
  const ConvSpec& detector_head() const { return detector_head_; }
  const ConvSpec& weight_head() const { return weight_head_; }

  /** \brief Parameter index ranges of the two output heads (kernel and bias) */
  std::vector<ParamSlice> weight_head_slices() const { return {weight_head_.weight, weight_head_.bias}; }

 private:
  Architecture arch_;
  std::vector<BlockSpec> encoder_, decoder_;
  ConvSpec detector_head_, weight_head_;
  Eigen::VectorXd params_;
  Eigen::VectorXd buffers_;
};

/** \brief Dense network outputs for one image, all at input resolution */
struct DenseMaps {
  int size = 0;
  Tensor detector;    ///< 1 channel
  Tensor weight;      ///< 3 channels
  Tensor descriptor;  ///< descriptor_dim channels

  static DenseMaps zeros_like(const DenseMaps& other);
};

enum class NormMode { kTrain, kInference };

/** \brief Activations recorded during a forward pass, consumed by backprop */
class Tape {
 public:
  bool empty() const { return state_ == nullptr; }
  void clear();
  ~Tape();
  Tape();
  Tape(Tape&&) noexcept;
  Tape& operator=(Tape&&) noexcept;

  struct State;
  State* state() { return state_.get(); }
  void reset(std::unique_ptr<State> s);

 private:
  std::unique_ptr<State> state_;
};

/**
 * \brief Forward pass over a batch of images.
 *
 * In kTrain mode batch norm uses the batch statistics and updates the running
 * averages in model.buffers(); in kInference mode the running averages are used.
 * When tape is non-null the activations needed by backprop are recorded.
 * Throws SizeIndivisible when the image side is not a multiple of 2^E.
 */
std::vector<DenseMaps> forward(FeatureModel& model, const std::vector<const Grid*>& images,
                               NormMode mode, Tape* tape = nullptr);

/** \brief Inference-mode forward of one image without touching running statistics */
DenseMaps forward_inference(const FeatureModel& model, const Grid& image);

/**
 * \brief Reverse-mode gradient dLoss/dtheta given adjoints on every output map.
 *
 * Throws NoForwardTape when the tape holds no recorded pass. The tape is left
 * intact so the same pass can be differentiated against several adjoints.
 */
Eigen::VectorXd backprop(const FeatureModel& model, Tape& tape, const std::vector<DenseMaps>& adjoints);

namespace nn {

// Layer primitives; exposed for unit tests.
Tensor conv_forward(const Tensor& in, const ConvSpec& conv, const Eigen::VectorXd& params);
Tensor conv_backward(const Tensor& in, const Tensor& dout, const ConvSpec& conv,
                     const Eigen::VectorXd& params, Eigen::VectorXd& grad);
Tensor maxpool2(const Tensor& in, std::vector<int>* argmax);
Tensor maxpool2_backward(const Tensor& dout, const std::vector<int>& argmax, int h, int w);
Tensor resize_bilinear(const Tensor& in, int h, int w);
Tensor resize_bilinear_backward(const Tensor& dout, int h, int w);

}  // namespace nn

}  // namespace hero
