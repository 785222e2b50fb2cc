#include "vcl/net.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "vcl/parallel.hpp"

namespace vcl::net {

using ad::Tape;
using ad::Var;

std::string_view to_string(ModelKind k) { return k == ModelKind::vit ? "vit" : "covit"; }

ModelKind model_kind_from_string(std::string_view s) {
    if (s == "vit" || s == "ViT") return ModelKind::vit;
    if (s == "covit" || s == "CoViT") return ModelKind::covit;
    throw std::invalid_argument("unknown model kind '" + std::string(s) + "'");
}

std::string_view to_string(SublayerKind k) {
    switch (k) {
        case SublayerKind::embed: return "embed";
        case SublayerKind::attn: return "attn";
        case SublayerKind::conv: return "conv";
        case SublayerKind::mlp: return "mlp";
        case SublayerKind::head: return "head";
    }
    return "?";
}

SublayerKind sublayer_kind_from_string(std::string_view s) {
    for (auto k : {SublayerKind::embed, SublayerKind::attn, SublayerKind::conv, SublayerKind::mlp, SublayerKind::head})
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown sublayer kind '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("invalid model config: " + m); };
    if (image_side == 0 || channels == 0 || patch_size == 0) fail("image_side, channels and patch_size must be positive");
    if (image_side % patch_size != 0) fail("image_side must be divisible by patch_size");
    if (embed_dim == 0) fail("embed_dim must be positive");
    if (depth == 0) fail("depth must be at least 1");
    if (num_classes < 2) fail("num_classes must be at least 2");
    if (mlp_ratio == 0) fail("mlp_ratio must be positive");
    if (!(ln_eps > 0.0)) fail("ln_eps must be positive");
    if (kind == ModelKind::vit) {
        if (heads == 0) fail("heads must be positive");
        if (embed_dim % heads != 0) fail("embed_dim must be divisible by heads");
    } else {
        if (kernel_sizes.empty()) fail("kernel_sizes must name at least one group");
        if (embed_dim % kernel_sizes.size() != 0) fail("embed_dim must be divisible by the number of kernel groups");
        for (auto k : kernel_sizes)
            if (k % 2 == 0) fail("kernel sizes must be odd");
    }
}

std::string config_to_json(const ModelConfig& c) {
    nlohmann::json j;
    j["kind"] = std::string(to_string(c.kind));
    j["image_side"] = c.image_side;
    j["channels"] = c.channels;
    j["patch_size"] = c.patch_size;
    j["embed_dim"] = c.embed_dim;
    j["depth"] = c.depth;
    j["heads"] = c.heads;
    j["kernel_sizes"] = c.kernel_sizes;
    j["num_classes"] = c.num_classes;
    j["mlp_ratio"] = c.mlp_ratio;
    j["ln_eps"] = c.ln_eps;
    return j.dump();
}

ModelConfig config_from_json(std::string_view text) {
    const auto j = nlohmann::json::parse(text);
    ModelConfig c;
    c.kind = model_kind_from_string(j.value("kind", std::string("vit")));
    c.image_side = j.value("image_side", c.image_side);
    c.channels = j.value("channels", c.channels);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.depth = j.value("depth", c.depth);
    c.heads = j.value("heads", c.heads);
    c.kernel_sizes = j.value("kernel_sizes", c.kernel_sizes);
    c.num_classes = j.value("num_classes", c.num_classes);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.ln_eps = j.value("ln_eps", c.ln_eps);
    c.validate();
    return c;
}

namespace {

template <class T, class U, class F>
BlockWeights<U> map_block(const BlockWeights<T>& b, F& f) {
    BlockWeights<U> o;
    o.ln1_gamma = f(b.ln1_gamma);
    o.ln1_beta = f(b.ln1_beta);
    for (const auto& m : b.wq) o.wq.push_back(f(m));
    for (const auto& m : b.wk) o.wk.push_back(f(m));
    for (const auto& m : b.wv) o.wv.push_back(f(m));
    for (const auto& m : b.conv_kernel) o.conv_kernel.push_back(f(m));
    for (const auto& m : b.conv_bias) o.conv_bias.push_back(f(m));
    o.wo = f(b.wo);
    o.bo = f(b.bo);
    o.ln2_gamma = f(b.ln2_gamma);
    o.ln2_beta = f(b.ln2_beta);
    o.fc1_w = f(b.fc1_w);
    o.fc1_b = f(b.fc1_b);
    o.fc2_w = f(b.fc2_w);
    o.fc2_b = f(b.fc2_b);
    return o;
}

template <class U, class T, class F>
Weights<U> map_weights(const Weights<T>& w, F f) {
    Weights<U> o;
    o.patch_w = f(w.patch_w);
    o.patch_b = f(w.patch_b);
    o.pos = f(w.pos);
    if (w.cls) o.cls = f(*w.cls);
    for (const auto& b : w.blocks) o.blocks.push_back(map_block<T, U>(b, f));
    o.lnf_gamma = f(w.lnf_gamma);
    o.lnf_beta = f(w.lnf_beta);
    o.head_w = f(w.head_w);
    o.head_b = f(w.head_b);
    return o;
}

Weights<Var> bind(Tape& t, const Weights<DenseMatrix>& w, bool variables) {
    return map_weights<Var>(w, [&](const DenseMatrix& m) { return variables ? t.variable(m) : t.constant(m); });
}

Weights<DenseMatrix> extract_grads(const Tape& t, const Weights<Var>& v) {
    return map_weights<DenseMatrix>(v, [&](Var x) { return t.grad(x); });
}

std::vector<std::uint32_t> patch_index(const ModelConfig& c) {
    const std::size_t p = c.patch_size;
    const std::size_t s = c.image_side;
    std::vector<std::uint32_t> idx;
    idx.reserve(c.num_patches() * c.patch_dim());
    for (std::size_t gy = 0; gy < c.grid(); ++gy)
        for (std::size_t gx = 0; gx < c.grid(); ++gx)
            for (std::size_t ch = 0; ch < c.channels; ++ch)
                for (std::size_t py = 0; py < p; ++py)
                    for (std::size_t px = 0; px < p; ++px)
                        idx.push_back(static_cast<std::uint32_t>((ch * s + gy * p + py) * s + gx * p + px));
    return idx;
}

Var embed_graph(Tape& t, const ModelConfig& c, const Weights<Var>& w, Var image_row) {
    const Var patches = t.gather(image_row, patch_index(c), c.num_patches(), c.patch_dim());
    Var tokens = t.add_row(t.matmul(patches, w.patch_w), w.patch_b);
    if (c.kind == ModelKind::vit) {
        const Var parts[] = {*w.cls, tokens};
        tokens = t.concat_rows(parts);
    }
    return t.add(tokens, w.pos);
}

Var attn_graph(Tape& t, const ModelConfig& c, const BlockWeights<Var>& b, Var z) {
    const Var h = t.layer_norm_rows(z, b.ln1_gamma, b.ln1_beta, c.ln_eps);
    const double temperature = 1.0 / std::sqrt(static_cast<double>(c.head_dim()));
    std::vector<Var> heads;
    for (std::size_t i = 0; i < c.heads; ++i) {
        const Var q = t.matmul(h, b.wq[i]);
        const Var k = t.matmul(h, b.wk[i]);
        const Var v = t.matmul(h, b.wv[i]);
        const Var scores = t.scale(t.matmul(q, t.transpose(k)), temperature);
        heads.push_back(t.matmul(t.softmax_rows(scores), v));
    }
    const Var cat = heads.size() == 1 ? heads[0] : t.concat_cols(heads);
    return t.add_row(t.matmul(cat, b.wo), b.bo);
}

Var conv_graph(Tape& t, const ModelConfig& c, const BlockWeights<Var>& b, Var z) {
    const Var h = t.layer_norm_rows(z, b.ln1_gamma, b.ln1_beta, c.ln_eps);
    const std::size_t width = c.head_dim();
    std::vector<Var> groups;
    for (std::size_t g = 0; g < c.kernel_sizes.size(); ++g) {
        const Var slice = c.kernel_sizes.size() == 1 ? h : t.slice_cols(h, g * width, width);
        const Var cols = t.im2col_tokens(slice, c.kernel_sizes[g]);
        groups.push_back(t.add_row(t.matmul(cols, b.conv_kernel[g]), b.conv_bias[g]));
    }
    const Var cat = groups.size() == 1 ? groups[0] : t.concat_cols(groups);
    return t.add_row(t.matmul(cat, b.wo), b.bo);
}

Var mlp_graph(Tape& t, const ModelConfig& c, const BlockWeights<Var>& b, Var z) {
    const Var h = t.layer_norm_rows(z, b.ln2_gamma, b.ln2_beta, c.ln_eps);
    const Var hidden = t.gelu(t.add_row(t.matmul(h, b.fc1_w), b.fc1_b));
    return t.add_row(t.matmul(hidden, b.fc2_w), b.fc2_b);
}

Var head_graph(Tape& t, const ModelConfig& c, const Weights<Var>& w, Var z) {
    const Var pooled = c.kind == ModelKind::vit ? t.slice_rows(z, 0, 1) : t.mean_rows(z);
    const Var normed = t.layer_norm_rows(pooled, w.lnf_gamma, w.lnf_beta, c.ln_eps);
    return t.add_row(t.matmul(normed, w.head_w), w.head_b);
}

Var branch_graph(Tape& t, const ModelConfig& c, const Weights<Var>& w, std::size_t step, Var z) {
    const auto& blk = w.blocks[(step - 1) / 2];
    switch (step_kind(c, step)) {
        case SublayerKind::attn: return attn_graph(t, c, blk, z);
        case SublayerKind::conv: return conv_graph(t, c, blk, z);
        case SublayerKind::mlp: return mlp_graph(t, c, blk, z);
        default: throw std::invalid_argument("branch_graph: not a residual step");
    }
}

struct FullGraph {
    Var logits;
    std::vector<Var> step_inputs;
    std::vector<Var> branches;
    std::vector<Var> outputs;
};

FullGraph full_graph(Tape& t, const ModelConfig& c, const Weights<Var>& w, Var image_row) {
    FullGraph g;
    const std::size_t steps = step_count(c);
    g.step_inputs.reserve(steps);
    g.branches.reserve(steps);
    g.outputs.reserve(steps);
    Var z = embed_graph(t, c, w, image_row);
    g.step_inputs.push_back(image_row);
    g.branches.push_back(Var{});
    g.outputs.push_back(z);
    for (std::size_t s = 1; s + 1 < steps; ++s) {
        const Var f = branch_graph(t, c, w, s, z);
        g.step_inputs.push_back(z);
        g.branches.push_back(f);
        z = t.add(z, f);
        g.outputs.push_back(z);
    }
    g.logits = head_graph(t, c, w, z);
    g.step_inputs.push_back(z);
    g.branches.push_back(Var{});
    g.outputs.push_back(g.logits);
    return g;
}

void check_image(const ModelConfig& c, const Image& image) {
    if (image.channels != c.channels || image.side != c.image_side || image.pixels.size() != c.pixel_count()) {
        std::ostringstream m;
        m << "image is " << image.channels << "x" << image.side << "x" << image.side << ", model expects "
          << c.channels << "x" << c.image_side << "x" << c.image_side;
        throw std::invalid_argument(m.str());
    }
}

Image image_like(const Image& ref, const DenseMatrix& row) {
    Image out(ref.channels, ref.side);
    std::copy(row.data().begin(), row.data().end(), out.pixels.begin());
    return out;
}

}  // namespace

DenseMatrix image_row(const Image& image) { return DenseMatrix::row_vector(image.pixels); }

std::vector<double> flatten(const ModelParams& params) {
    std::vector<double> out;
    out.reserve(params.parameter_count());
    for (const auto* m : params.tensors()) out.insert(out.end(), m->data().begin(), m->data().end());
    return out;
}

void unflatten(ModelParams& params, std::span<const double> flat) {
    if (flat.size() != params.parameter_count()) throw std::invalid_argument("unflatten: length mismatch");
    std::size_t off = 0;
    for (auto* m : params.tensors()) {
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                  flat.begin() + static_cast<std::ptrdiff_t>(off + m->size()), m->data().begin());
        off += m->size();
    }
}

std::vector<DenseMatrix*> ModelParams::tensors() {
    std::vector<DenseMatrix*> out;
    for_each_tensor(w, [&](DenseMatrix& m) { out.push_back(&m); });
    return out;
}

std::vector<const DenseMatrix*> ModelParams::tensors() const {
    std::vector<const DenseMatrix*> out;
    for_each_tensor(w, [&](const DenseMatrix& m) { out.push_back(&m); });
    return out;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto* m : tensors()) n += m->size();
    return n;
}

ModelParams ModelParams::zeros_like() const {
    ModelParams z;
    z.config = config;
    z.w = map_weights<DenseMatrix>(w, [](const DenseMatrix& m) { return DenseMatrix(m.rows(), m.cols()); });
    return z;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
    if (!(a.config == b.config)) return false;
    const auto ta = a.tensors();
    const auto tb = b.tensors();
    if (ta.size() != tb.size()) return false;
    for (std::size_t i = 0; i < ta.size(); ++i)
        if (!(*ta[i] == *tb[i])) return false;
    return true;
}

std::size_t conv_projection_param_count(std::size_t embed_dim, const std::vector<std::size_t>& kernel_sizes) {
    const std::size_t width = embed_dim / kernel_sizes.size();
    std::size_t n = 0;
    for (auto k : kernel_sizes) n += width * width * k + width;
    return n;
}

ModelParams build_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    constexpr double std_dev = 0.02;
    auto trunc = [&](std::size_t r, std::size_t c) {
        DenseMatrix m(r, c);
        for (auto& x : m.data()) {
            double v;
            do {
                v = normal(rng);
            } while (std::abs(v) > 2.0);
            x = v * std_dev;
        }
        return m;
    };
    auto gauss = [&](std::size_t r, std::size_t c) {
        DenseMatrix m(r, c);
        for (auto& x : m.data()) x = normal(rng) * std_dev;
        return m;
    };
    const std::size_t d = config.embed_dim;
    const std::size_t hd = config.head_dim();
    ModelParams p;
    p.config = config;
    auto& w = p.w;
    w.patch_w = trunc(config.patch_dim(), d);
    w.patch_b = DenseMatrix(1, d);
    w.pos = gauss(config.seq_len(), d);
    if (config.kind == ModelKind::vit) w.cls = trunc(1, d);
    for (std::size_t l = 0; l < config.depth; ++l) {
        BlockWeights<DenseMatrix> b;
        b.ln1_gamma = DenseMatrix(1, d, 1.0);
        b.ln1_beta = DenseMatrix(1, d);
        if (config.kind == ModelKind::vit) {
            for (std::size_t h = 0; h < config.heads; ++h) b.wq.push_back(trunc(d, hd));
            for (std::size_t h = 0; h < config.heads; ++h) b.wk.push_back(trunc(d, hd));
            for (std::size_t h = 0; h < config.heads; ++h) b.wv.push_back(trunc(d, hd));
        } else {
            for (auto k : config.kernel_sizes) {
                b.conv_kernel.push_back(trunc(k * hd, hd));
                b.conv_bias.push_back(DenseMatrix(1, hd));
            }
        }
        b.wo = trunc(d, d);
        b.bo = DenseMatrix(1, d);
        b.ln2_gamma = DenseMatrix(1, d, 1.0);
        b.ln2_beta = DenseMatrix(1, d);
        b.fc1_w = trunc(d, config.hidden_dim());
        b.fc1_b = DenseMatrix(1, config.hidden_dim());
        b.fc2_w = trunc(config.hidden_dim(), d);
        b.fc2_b = DenseMatrix(1, d);
        w.blocks.push_back(std::move(b));
    }
    w.lnf_gamma = DenseMatrix(1, d, 1.0);
    w.lnf_beta = DenseMatrix(1, d);
    w.head_w = trunc(d, config.num_classes);
    w.head_b = DenseMatrix(1, config.num_classes);
    return p;
}

std::size_t step_count(const ModelConfig& c) { return 2 * c.depth + 2; }

SublayerKind step_kind(const ModelConfig& c, std::size_t step) {
    if (step >= step_count(c)) throw std::invalid_argument("step index out of range");
    if (step == 0) return SublayerKind::embed;
    if (step == step_count(c) - 1) return SublayerKind::head;
    if (step % 2 == 0) return SublayerKind::mlp;
    return c.kind == ModelKind::vit ? SublayerKind::attn : SublayerKind::conv;
}

bool is_residual_step(const ModelConfig& c, std::size_t step) {
    const auto k = step_kind(c, step);
    return k != SublayerKind::embed && k != SublayerKind::head;
}

ForwardTrace forward_trace(const ModelParams& params, const Image& image) {
    const auto& c = params.config;
    check_image(c, image);
    Tape t;
    const auto w = bind(t, params.w, false);
    const Var img = t.constant(image_row(image));
    const FullGraph g = full_graph(t, c, w, img);
    ForwardTrace trace;
    trace.steps.reserve(g.outputs.size());
    for (std::size_t s = 0; s < g.outputs.size(); ++s) {
        TraceStep st;
        st.index = s;
        st.kind = step_kind(c, s);
        st.input = t.value(g.step_inputs[s]);
        if (g.branches[s].valid()) st.branch = t.value(g.branches[s]);
        st.output = t.value(g.outputs[s]);
        trace.steps.push_back(std::move(st));
    }
    trace.logits = t.value(g.logits);
    return trace;
}

DenseMatrix logits(const ModelParams& params, const Image& image) {
    check_image(params.config, image);
    Tape t;
    const auto w = bind(t, params.w, false);
    return t.value(full_graph(t, params.config, w, t.constant(image_row(image))).logits);
}

std::size_t argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

std::size_t predict(const ModelParams& params, const Image& image) { return argmax(logits(params, image).data()); }

Image grad_input(const ModelParams& params, const Image& image, std::size_t label) {
    const auto& c = params.config;
    check_image(c, image);
    if (label >= c.num_classes) throw std::invalid_argument("grad_input: label out of range");
    Tape t;
    const auto w = bind(t, params.w, false);
    const Var img = t.variable(image_row(image));
    const Var loss = t.cross_entropy(full_graph(t, c, w, img).logits, label);
    t.backward(loss);
    return image_like(image, t.grad(img));
}

Image grad_input_logits(const ModelParams& params, const Image& image, std::span<const double> seed) {
    const auto& c = params.config;
    check_image(c, image);
    if (seed.size() != c.num_classes) throw std::invalid_argument("grad_input_logits: seed length must equal num_classes");
    Tape t;
    const auto w = bind(t, params.w, false);
    const Var img = t.variable(image_row(image));
    const Var out = full_graph(t, c, w, img).logits;
    t.backward(out, DenseMatrix::row_vector(seed));
    return image_like(image, t.grad(img));
}

ModelParams grad_params(const ModelParams& params, std::span<const Sample> batch, double* mean_loss_out) {
    if (batch.empty()) throw std::invalid_argument("grad_params: empty batch");
    const auto& c = params.config;
    std::vector<Weights<DenseMatrix>> per_sample(batch.size());
    std::vector<double> losses(batch.size());
    parallel_for(batch.size(), [&](std::size_t i) {
        const auto& s = batch[i];
        check_image(c, *s.image);
        if (s.label >= c.num_classes) throw std::invalid_argument("grad_params: label out of range");
        Tape t;
        const auto w = bind(t, params.w, true);
        const Var loss = t.cross_entropy(full_graph(t, c, w, t.constant(image_row(*s.image))).logits, s.label);
        losses[i] = t.value(loss)(0, 0);
        t.backward(loss);
        per_sample[i] = extract_grads(t, w);
    });
    ModelParams out = params.zeros_like();
    auto acc = out.tensors();
    for (auto& g : per_sample) {
        std::size_t k = 0;
        for_each_tensor(g, [&](const DenseMatrix& m) { *acc[k++] += m; });
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (auto* m : acc) *m *= inv;
    if (mean_loss_out) {
        double s = 0.0;
        for (double l : losses) s += l;
        *mean_loss_out = s * inv;
    }
    return out;
}

double mean_loss(const ModelParams& params, std::span<const Sample> batch) {
    if (batch.empty()) throw std::invalid_argument("mean_loss: empty batch");
    std::vector<double> losses(batch.size());
    parallel_for(batch.size(), [&](std::size_t i) {
        Tape t;
        const auto w = bind(t, params.w, false);
        const Var img = t.constant(image_row(*batch[i].image));
        losses[i] = t.value(t.cross_entropy(full_graph(t, params.config, w, img).logits, batch[i].label))(0, 0);
    });
    double s = 0.0;
    for (double l : losses) s += l;
    return s / static_cast<double>(batch.size());
}

StepGraph step_graph(const ModelParams& params, std::size_t step, const DenseMatrix& input) {
    const auto& c = params.config;
    const auto kind = step_kind(c, step);
    StepGraph g;
    const auto w = bind(g.tape, params.w, false);
    if (kind == SublayerKind::embed) {
        if (input.rows() != 1 || input.cols() != c.pixel_count())
            throw std::invalid_argument("step_graph: embed input must be 1×pixel_count");
    } else if (kind == SublayerKind::head || is_residual_step(c, step)) {
        if (input.rows() != c.seq_len() || input.cols() != c.embed_dim)
            throw std::invalid_argument("step_graph: token input must be seq_len×embed_dim");
    }
    g.input = g.tape.variable(input);
    switch (kind) {
        case SublayerKind::embed: g.output = embed_graph(g.tape, c, w, g.input); break;
        case SublayerKind::head: g.output = head_graph(g.tape, c, w, g.input); break;
        default: g.output = branch_graph(g.tape, c, w, step, g.input); break;
    }
    return g;
}

DenseMatrix embed(const ModelParams& params, const Image& image) {
    check_image(params.config, image);
    Tape t;
    const auto w = bind(t, params.w, false);
    return t.value(embed_graph(t, params.config, w, t.constant(image_row(image))));
}

DenseMatrix run_encoder(const ModelParams& params, const DenseMatrix& z0) {
    const auto& c = params.config;
    if (z0.rows() != c.seq_len() || z0.cols() != c.embed_dim)
        throw std::invalid_argument("run_encoder: z0 must be seq_len×embed_dim");
    Tape t;
    const auto w = bind(t, params.w, false);
    Var z = t.constant(z0);
    for (std::size_t s = 1; s + 1 < step_count(c); ++s) z = t.add(z, branch_graph(t, c, w, s, z));
    return t.value(z);
}

}  // namespace vcl::net
