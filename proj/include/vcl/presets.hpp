#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "vcl/attack.hpp"
#include "vcl/net.hpp"
#include "vcl/train.hpp"

namespace vcl::presets {

/// Model presets at desk scale: images 32×32×3, patch 8 (16 for the
/// large-patch variants), D = 16 for the tiny and toy models, D = 32 for the
/// S/M/L groups. Names: ViT-T1..T4, CoViT-T1..T4, ViT-toy, CoViT-toy,
/// ViT-S1..S4, CoViT-S1..S5, ViT-M1..M3, CoViT-M1..M5, ViT-L, CoViT-L1, CoViT-L2.
net::ModelConfig model_preset(std::string_view name);
std::vector<std::string> model_preset_names();
/// One-line description of how the preset was scaled down.
std::string preset_scale_note(std::string_view name);

/// fgsm, pgd7-linf, pgd7-l2, pgd20-l2, cw. The CW success threshold is
/// rescaled to pixel_count.
attack::AttackConfig attack_preset(std::string_view name, std::size_t pixel_count = 3072);
std::vector<std::string> attack_preset_names();

/// Attack config from JSON: {"kind", "norm", "epsilon", "alpha", "iters",
/// "cw": {"c", "kappa", "lr", "success_threshold"}}; absent fields keep the
/// defaults of AttackConfig.
attack::AttackConfig attack_config_from_json(std::string_view text);
/// Preset name, or a path to a JSON attack config when the name is unknown.
attack::AttackConfig resolve_attack(const std::string& name_or_path, std::size_t pixel_count);

/// Budget used for the toy models on the stripes dataset (256 images).
train::TrainConfig toy_train_config();

}  // namespace vcl::presets
