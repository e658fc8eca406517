#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "logonet/autograd.hpp"
#include "logonet/network_spec.hpp"
#include "logonet/optim.hpp"
#include "logonet/rng.hpp"

namespace logonet {

enum class Mode { kTrain, kTest };

struct InitOptions {
  // Standard deviation of head linear layers (including re-initialized
  // classifiers).
  double head_std = 0.01;
  // Trunk convolutions use std sqrt(2 / fan_in) when true, head_std when
  // false.
  bool fan_in_scaled_trunk = true;
};

struct HeadOutput {
  std::string head;
  Var logits;  // (n, num_classes, 1, 1)
  double loss_weight = 1.0;
  bool final = false;
};

struct Prediction {
  std::vector<int> classes;  // argmax, lowest index on ties
  Tensor probs;              // (n, num_classes, 1, 1)
};

// An executable network: a validated spec plus named parameters.
// Move-only because parameters are tape leaves; use clone() for a deep copy.
class Network {
 public:
  static Network build(NetworkSpec spec, uint64_t seed, const InitOptions& init = {});

  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  Network clone() const;

  const NetworkSpec& spec() const { return spec_; }
  const InitOptions& init_options() const { return init_; }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  const Parameter* find_parameter(std::string_view name) const;
  Parameter& parameter(std::string_view name);
  std::vector<Parameter*> trainable();
  void zero_grad();

  // Named non-trainable tensors saved with checkpoints (e.g. "input.mean").
  std::map<std::string, Tensor>& buffers() { return buffers_; }
  const std::map<std::string, Tensor>& buffers() const { return buffers_; }

  uint64_t iteration() const { return iteration_; }
  void set_iteration(uint64_t iteration) { iteration_ = iteration; }

  // Train mode computes every head with dropout drawn from `rng`; test mode
  // computes only the final head. Fixed-size networks reject inputs other
  // than the nominal size.
  std::vector<HeadOutput> forward(const Tensor& batch, Mode mode, Rng* rng = nullptr) const;

  // Trunk activation after `layer`, in test mode.
  Var features(const Tensor& batch, std::string_view layer) const;

  // Final-head softmax and argmax, no tape.
  Prediction predict(const Tensor& batch) const;

  // Replaces the parameters of `layer` with fresh draws.
  void reinitialize_layer(std::string_view layer, uint64_t seed);

 private:
  Network() = default;
  void add_parameter(std::string name, Tensor value);
  void check_input(const Shape& shape) const;
  void reindex();

  NetworkSpec spec_;
  InitOptions init_;
  std::vector<Parameter> params_;
  std::map<std::string, size_t, std::less<>> index_;
  std::map<std::string, Tensor> buffers_;
  uint64_t iteration_ = 0;
};

// Layer that owns a parameter: "inception1/3x3.weight" -> "inception1",
// "cls1_fc2.bias" -> "cls1_fc2".
std::string owning_layer(std::string_view parameter_name);

// Layer-level name of a parameter: "inception1/3x3.weight" -> "inception1/3x3".
std::string parameter_group(std::string_view parameter_name);

Network reinit_head(Network net, std::string_view head, int64_t num_classes,
                    uint64_t seed);

struct TransferReport {
  std::vector<std::string> copied;
  std::vector<std::string> fresh;
};

// Copies every parameter and buffer of `source` into `target` whose name
// and shape match, skipping layers in target.spec().reinit. A shape mismatch
// on a layer not marked for re-initialization is a BuildError.
TransferReport transfer_parameters(const Network& source, Network& target);

struct WarpAssignment {
  int branch = 0;       // 0: 1x1 branch, 1: 3x3 branch, 2: 5x5 branch
  int64_t filter = 0;   // output filter within the branch
  int64_t donor = 0;    // filter index in the original first convolution
};

struct WarpResult {
  Network net;
  std::vector<WarpAssignment> assignments;
};

// Full-Inception surgery: the pretrained first convolution becomes an
// inception layer. Donor filters are randomly partitioned over the three
// convolution branches (with replacement when the branches need more filters
// than exist) and each donor kernel is bilinearly resized to its branch's
// kernel size. Branch input channel j takes donor channel j mod c. Reduce and
// pool-projection convolutions are freshly initialized; all other layers keep
// their pretrained weights.
WarpResult warp_first_layer_to_inception(const Network& pretrained,
                                         const InceptionSpec& target, uint64_t seed);

}  // namespace logonet
