// Training orchestration (rotation, coarse, fine stages), registration
// inference, checkpoints, and the composite gradient-check suite.
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ddr/checkpoint.hpp"
#include "ddr/config.hpp"
#include "ddr/discrete.hpp"
#include "ddr/formats.hpp"
#include "ddr/gradsuite.hpp"
#include "ddr/net.hpp"
#include "ddr/objective.hpp"
#include "ddr/synth.hpp"
#include "ddr/warp.hpp"

namespace ddr {

struct Checkpoint {
  std::string stage_id;  // "rotation" | "coarse" | "fine"
  StageConfig config;
  std::vector<DdrwEntry> params;
  std::vector<double> train_loss_history;  // per-epoch mean training loss
  std::vector<double> val_metric_history;  // per-epoch validation CC
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Stage models.

struct RotationModel {
  StageConfig config;
  RotationHead head;
  std::vector<Tensor> parameters() const { return head.parameters(); }
  std::vector<NamedParam> named_parameters() const {
    return head.named_parameters("stage.rotation.");
  }
};

RotationModel build_rotation_model(const StageConfig& config, const MeshStack& stack, Rng& rng);
RotationModel rotation_model_from_checkpoint(const Checkpoint& ckpt, const MeshStack& stack);

struct DdrStage {
  std::string stage_id;
  StageConfig config;
  ControlGrid grid;
  LabelSpace labels;
  std::shared_ptr<const KernelTables> tables;
  BaryUpsample upsample;  // undeformed control mesh -> data mesh
  DiffusionGeometry diffusion;
  UNet unet;
  FsnParams fsn;
  CrfParams crf;

  std::vector<Tensor> parameters() const;
  std::vector<NamedParam> named_parameters() const;
};

DdrStage build_ddr_stage(const std::string& stage_id, const StageConfig& config,
                         const MeshStack& stack, Rng& rng);
DdrStage ddr_stage_from_checkpoint(const Checkpoint& ckpt, const MeshStack& stack);

struct DdrForward {
  Tensor q;               // control-resolution label distribution after the CRF
  Tensor warp_positions;  // data-order deformed positions
  Tensor warped;          // moving features resampled at the deformed grid
  RegistrationLossGraph loss;
};

DdrForward ddr_stage_forward(const DdrStage& stage, const MeshStack& stack,
                             const Tensor& fixed, const Tensor& moving);

// ---------------------------------------------------------------------------
// Training. Batch size is 1; subjects are visited in a seeded shuffled order;
// the checkpoint with the best validation CC is returned.

struct TrainHooks {
  std::function<void(int epoch, double train_loss, double val_cc)> on_epoch;
};

Checkpoint train_rotation_stage(const std::vector<SubjectPair>& train,
                                const std::vector<SubjectPair>& val,
                                const StageConfig& config, const MeshStack& stack,
                                const TrainHooks& hooks = {});

// Prior-stage warps must already be applied to the moving maps.
Checkpoint train_ddr_stage(const std::string& stage_id,
                           const std::vector<SubjectPair>& train,
                           const std::vector<SubjectPair>& val, const StageConfig& config,
                           const MeshStack& stack, const TrainHooks& hooks = {});

// ---------------------------------------------------------------------------
// Registration inference: rotation warp o coarse warp (hex-upsampled to the
// fine control order when a fine stage exists, then barycentric to the data
// order) o fine warp. Omitted stages are the identity.

struct RegisterOptions {
  bool hard_decode = false;        // argmax labels instead of the soft expectation
  int coarse_handoff_order = -1;   // force the coarse hex-upsampling target order
};

struct RegisterResult {
  WarpField warp;      // composite deformation at the data order
  FeatureMap warped;   // moving features resampled stage by stage
  double cc = 0.0;
  StrainReport strain;
};

RegisterResult register_pair(const FeatureMap& fixed, const FeatureMap& moving,
                             const Checkpoint* rotation, const Checkpoint* coarse,
                             const Checkpoint* fine, const MeshStack& stack,
                             const RegisterOptions& options = {});

// ---------------------------------------------------------------------------
// Composite gradient checks (network blocks and the end-to-end toy graph).

std::vector<GradSuiteResult> composite_gradient_suite(int components = 100, double h = 1e-6,
                                                      double rtol = 1e-3,
                                                      std::uint64_t seed = 20240802);

}  // namespace ddr
