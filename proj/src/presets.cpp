#include "vcl/presets.hpp"

#include <fstream>
#include <iterator>
#include <stdexcept>

#include <json.hpp>

namespace vcl::presets {

namespace {

struct Entry {
    const char* name;
    net::ModelKind kind;
    std::size_t depth;
    std::size_t heads;
    std::vector<std::size_t> kernels;
    std::size_t patch;
    std::size_t dim;
};

const std::vector<Entry>& table() {
    using net::ModelKind;
    const std::vector<std::size_t> k3{3}, k3x4{3, 3, 3, 3}, k7x4{7, 7, 7, 7}, k1357{1, 3, 5, 7},
        k3x4k5x4{3, 3, 3, 3, 5, 5, 5, 5};
    static const std::vector<Entry> t = {
        {"ViT-toy", ModelKind::vit, 2, 2, {}, 8, 16},
        {"CoViT-toy", ModelKind::covit, 2, 0, {3, 3}, 8, 16},
        {"ViT-T1", ModelKind::vit, 4, 1, {}, 8, 16},
        {"ViT-T2", ModelKind::vit, 4, 4, {}, 8, 16},
        {"ViT-T3", ModelKind::vit, 8, 1, {}, 8, 16},
        {"ViT-T4", ModelKind::vit, 8, 4, {}, 8, 16},
        {"CoViT-T1", ModelKind::covit, 4, 0, k3, 8, 16},
        {"CoViT-T2", ModelKind::covit, 4, 0, k3x4, 8, 16},
        {"CoViT-T3", ModelKind::covit, 8, 0, k3, 8, 16},
        {"CoViT-T4", ModelKind::covit, 8, 0, k3x4, 8, 16},
        {"ViT-S1", ModelKind::vit, 1, 1, {}, 8, 32},
        {"ViT-S2", ModelKind::vit, 1, 4, {}, 8, 32},
        {"ViT-S3", ModelKind::vit, 4, 1, {}, 8, 32},
        {"ViT-S4", ModelKind::vit, 4, 4, {}, 8, 32},
        {"CoViT-S1", ModelKind::covit, 1, 0, k3, 8, 32},
        {"CoViT-S2", ModelKind::covit, 1, 0, k3x4, 8, 32},
        {"CoViT-S3", ModelKind::covit, 4, 0, k3, 8, 32},
        {"CoViT-S4", ModelKind::covit, 4, 0, k3x4, 8, 32},
        {"CoViT-S5", ModelKind::covit, 4, 0, k7x4, 8, 32},
        {"ViT-M1", ModelKind::vit, 8, 1, {}, 8, 32},
        {"ViT-M2", ModelKind::vit, 8, 4, {}, 8, 32},
        {"ViT-M3", ModelKind::vit, 8, 4, {}, 16, 32},
        {"CoViT-M1", ModelKind::covit, 8, 0, k3, 8, 32},
        {"CoViT-M2", ModelKind::covit, 8, 0, k1357, 8, 32},
        {"CoViT-M3", ModelKind::covit, 8, 0, k3x4, 8, 32},
        {"CoViT-M4", ModelKind::covit, 8, 0, k7x4, 8, 32},
        {"CoViT-M5", ModelKind::covit, 8, 0, k3x4, 16, 32},
        {"ViT-L", ModelKind::vit, 12, 8, {}, 16, 32},
        {"CoViT-L1", ModelKind::covit, 12, 0, k3x4k5x4, 16, 32},
        {"CoViT-L2", ModelKind::covit, 16, 0, k3x4k5x4, 16, 32},
    };
    return t;
}

const Entry& find(std::string_view name) {
    for (const auto& e : table())
        if (name == e.name) return e;
    throw std::invalid_argument("unknown model preset '" + std::string(name) + "'");
}

}  // namespace

net::ModelConfig model_preset(std::string_view name) {
    const Entry& e = find(name);
    net::ModelConfig c;
    c.kind = e.kind;
    c.image_side = 32;
    c.channels = 3;
    c.patch_size = e.patch;
    c.embed_dim = e.dim;
    c.depth = e.depth;
    if (e.kind == net::ModelKind::vit) {
        c.heads = e.heads;
    } else {
        c.heads = 1;
        c.kernel_sizes = e.kernels;
    }
    c.num_classes = 2;
    c.validate();
    return c;
}

std::vector<std::string> model_preset_names() {
    std::vector<std::string> out;
    for (const auto& e : table()) out.emplace_back(e.name);
    return out;
}

std::string preset_scale_note(std::string_view name) {
    const Entry& e = find(name);
    std::string s = "desk scale: image 32 (reference 224), patch " + std::to_string(e.patch) + ", embed_dim " +
                    std::to_string(e.dim);
    if (std::string_view(e.name).find("toy") == std::string_view::npos)
        s += e.dim == 16 ? " (reference 128)" : " (reference 512)";
    return s;
}

attack::AttackConfig attack_preset(std::string_view name, std::size_t pixel_count) {
    attack::AttackConfig a;
    if (name == "fgsm") {
        a.kind = attack::Kind::fgsm;
        a.norm = attack::Norm::linf;
        a.epsilon = 2.0 / 255.0;
        a.alpha = a.epsilon;
        a.iters = 1;
    } else if (name == "pgd7-linf") {
        a.kind = attack::Kind::pgd;
        a.norm = attack::Norm::linf;
        a.epsilon = 2.0 / 255.0;
        a.alpha = 2.0 / 255.0;
        a.iters = 7;
    } else if (name == "pgd7-l2" || name == "pgd20-l2") {
        a.kind = attack::Kind::pgd;
        a.norm = attack::Norm::l2;
        a.epsilon = 2.0;
        a.alpha = 0.2;
        a.iters = name == "pgd7-l2" ? 7 : 20;
    } else if (name == "cw") {
        a.kind = attack::Kind::cw;
        a.norm = attack::Norm::l2;
        a.iters = 100;
        a.cw.c = 1.0;
        a.cw.kappa = 0.0;
        a.cw.lr = 0.01;
        a.cw.success_threshold = attack::scaled_cw_threshold(pixel_count);
        a.epsilon = a.cw.success_threshold;
    } else {
        throw std::invalid_argument("unknown attack preset '" + std::string(name) + "'");
    }
    a.validate();
    return a;
}

std::vector<std::string> attack_preset_names() { return {"fgsm", "pgd7-linf", "pgd7-l2", "pgd20-l2", "cw"}; }

attack::AttackConfig attack_config_from_json(std::string_view text) {
    const auto j = nlohmann::json::parse(text);
    attack::AttackConfig a;
    if (j.contains("kind")) a.kind = attack::kind_from_string(j["kind"].get<std::string>());
    if (j.contains("norm")) a.norm = attack::norm_from_string(j["norm"].get<std::string>());
    a.epsilon = j.value("epsilon", a.epsilon);
    a.alpha = j.value("alpha", a.alpha);
    a.iters = j.value("iters", a.iters);
    if (j.contains("cw")) {
        const auto& c = j["cw"];
        a.cw.c = c.value("c", a.cw.c);
        a.cw.kappa = c.value("kappa", a.cw.kappa);
        a.cw.lr = c.value("lr", a.cw.lr);
        a.cw.success_threshold = c.value("success_threshold", a.cw.success_threshold);
    }
    a.validate();
    return a;
}

attack::AttackConfig resolve_attack(const std::string& name_or_path, std::size_t pixel_count) {
    for (const auto& n : attack_preset_names())
        if (n == name_or_path) return attack_preset(n, pixel_count);
    std::ifstream in(name_or_path);
    if (!in) throw std::invalid_argument("'" + name_or_path + "' is neither an attack preset nor a readable file");
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return attack_config_from_json(text);
}

train::TrainConfig toy_train_config() {
    // Flips and crops shift the stripe phase, which a toy model cannot learn
    // to ignore in this budget; the peak lr and SAM radius are reduced because
    // std-0.02 weights at D = 16 are small next to the defaults.
    train::TrainConfig t;
    t.epochs = 40;
    t.batch_size = 16;
    t.max_lr = 0.01;
    t.sam_rho = 0.02;
    t.momentum = 0.9;
    t.hflip = false;
    t.crop_pad = 0;
    return t;
}

}  // namespace vcl::presets
