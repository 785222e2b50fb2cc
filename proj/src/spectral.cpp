#include "vcl/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "vcl/errors.hpp"
#include "vcl/jacobian.hpp"
#include "vcl/parallel.hpp"

namespace vcl::spectral {

std::string_view to_string(Mode m) {
    switch (m) {
        case Mode::exact: return "exact";
        case Mode::bound: return "bound";
        case Mode::both: return "both";
    }
    return "?";
}

Mode mode_from_string(std::string_view s) {
    if (s == "exact") return Mode::exact;
    if (s == "bound") return Mode::bound;
    if (s == "both") return Mode::both;
    throw std::invalid_argument("unknown spectra mode '" + std::string(s) + "'");
}

std::string_view to_string(Ordering o) {
    switch (o) {
        case Ordering::a_more_robust: return "a_more_robust";
        case Ordering::b_more_robust: return "b_more_robust";
        case Ordering::incomparable: return "incomparable";
    }
    return "?";
}

namespace {

double induced_bound(const LinearOperator& op) {
    std::vector<double> row_sums(op.out_dim, 0.0);
    double norm1 = 0.0;
    std::vector<double> e(op.in_dim, 0.0);
    for (std::size_t c = 0; c < op.in_dim; ++c) {
        e[c] = 1.0;
        const auto col = op.forward(e);
        e[c] = 0.0;
        double col_sum = 0.0;
        for (std::size_t r = 0; r < col.size(); ++r) {
            col_sum += std::abs(col[r]);
            row_sums[r] += std::abs(col[r]);
        }
        norm1 = std::max(norm1, col_sum);
    }
    const double norm_inf = *std::max_element(row_sums.begin(), row_sums.end());
    return std::sqrt(norm1 * norm_inf);
}

}  // namespace

LayerSpectra layer_spectra(const net::ModelParams& params, const net::Image& image, Mode mode, std::size_t image_id,
                           const SpectraOptions& opts) {
    const auto& c = params.config;
    if (mode != Mode::bound && c.seq_len() * c.embed_dim > jacobian::kDenseLimit) {
        std::ostringstream m;
        m << "exact spectra need seq_len*embed_dim <= " << jacobian::kDenseLimit << " (model has "
          << c.seq_len() * c.embed_dim << "); use bound mode";
        throw ResourceLimitError(m.str());
    }
    const net::ForwardTrace trace = net::forward_trace(params, image);
    LayerSpectra out;
    out.image_id = image_id;
    PowerIterationOptions pio;
    pio.tol = opts.tol;
    pio.max_iter = opts.max_iter;
    for (const auto& st : trace.steps) {
        const LinearOperator op = jacobian::step_operator(params, st.index, st.input);
        StepSigma s;
        s.step_index = st.index;
        s.kind = st.kind;
        s.method = mode;
        if (mode != Mode::bound) s.sigma_exact = sigma_max(op, pio);
        if (mode != Mode::exact) s.sigma_bound = induced_bound(op);
        out.steps.push_back(s);
    }
    return out;
}

std::vector<LayerSpectra> dataset_spectra(const net::ModelParams& params, std::span<const net::Image> images,
                                          Mode mode, const SpectraOptions& opts) {
    std::vector<LayerSpectra> out(images.size());
    parallel_for(images.size(), [&](std::size_t i) { out[i] = layer_spectra(params, images[i], mode, i, opts); });
    return out;
}

namespace {

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
    MeanStd r;
    for (double x : v) r.mean += x;
    r.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - r.mean) * (x - r.mean);
        r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return r;
}

bool residual(net::SublayerKind k) { return k != net::SublayerKind::embed && k != net::SublayerKind::head; }

}  // namespace

std::vector<double> SpectraReport::trajectory() const {
    std::vector<double> t;
    for (const auto& s : steps)
        if (residual(s.kind)) t.push_back(s.mean);
    return t;
}

SpectraReport aggregate_spectra(std::span<const LayerSpectra> spectra, const std::string& model_id) {
    if (spectra.empty()) throw std::invalid_argument("aggregate_spectra: no spectra");
    const auto& ref = spectra[0].steps;
    for (const auto& s : spectra) {
        if (s.steps.size() != ref.size())
            throw std::invalid_argument("aggregate_spectra: images have different step structures");
        for (std::size_t k = 0; k < ref.size(); ++k)
            if (s.steps[k].step_index != ref[k].step_index || s.steps[k].kind != ref[k].kind ||
                s.steps[k].method != ref[k].method)
                throw std::invalid_argument("aggregate_spectra: images have different step structures");
    }
    SpectraReport rep;
    rep.model_id = model_id;
    rep.image_count = spectra.size();
    rep.single_image = spectra.size() == 1;
    rep.method = ref.empty() ? Mode::exact : ref[0].method;
    std::vector<double> pooled;
    for (std::size_t k = 0; k < ref.size(); ++k) {
        std::vector<double> vals;
        vals.reserve(spectra.size());
        for (const auto& s : spectra) vals.push_back(s.steps[k].value());
        const auto ms = mean_std(vals);
        StepSummary sum;
        sum.step_index = ref[k].step_index;
        sum.kind = ref[k].kind;
        sum.method = ref[k].method;
        sum.mean = ms.mean;
        sum.std = ms.std;
        sum.count = vals.size();
        rep.steps.push_back(sum);
        if (residual(sum.kind)) {
            rep.integral += sum.mean;
            pooled.insert(pooled.end(), vals.begin(), vals.end());
        }
    }
    if (!pooled.empty()) {
        const auto ms = mean_std(pooled);
        rep.pooled_mean = ms.mean;
        rep.pooled_std = ms.std;
    }
    const auto traj = rep.trajectory();
    if (traj.size() > 2) {
        double middle = 0.0;
        for (std::size_t i = 1; i + 1 < traj.size(); ++i) middle += traj[i];
        middle /= static_cast<double>(traj.size() - 2);
        const double edges = 0.5 * (traj.front() + traj.back());
        if (middle > 0.0) rep.edge_to_middle_ratio = edges / middle;
    }
    return rep;
}

std::vector<double> block_sigmas(const net::ModelParams& params, const net::Image& image, const SpectraOptions& opts) {
    const auto& c = params.config;
    const net::ForwardTrace trace = net::forward_trace(params, image);
    PowerIterationOptions pio;
    pio.tol = opts.tol;
    pio.max_iter = opts.max_iter;
    std::vector<double> out;
    for (std::size_t l = 0; l < c.depth; ++l) {
        const std::size_t s1 = 2 * l + 1;
        const std::size_t s2 = s1 + 1;
        const LinearOperator first = jacobian::step_operator(params, s1, trace.steps[s1].input);
        const LinearOperator second = jacobian::step_operator(params, s2, trace.steps[s2].input);
        // J_block = J1 + J2·(I + J1)
        LinearOperator block;
        block.in_dim = first.in_dim;
        block.out_dim = first.out_dim;
        block.forward = [&](std::span<const double> v) {
            auto j1 = first.forward(v);
            std::vector<double> mid(v.begin(), v.end());
            for (std::size_t i = 0; i < mid.size(); ++i) mid[i] += j1[i];
            const auto j2 = second.forward(mid);
            for (std::size_t i = 0; i < j1.size(); ++i) j1[i] += j2[i];
            return j1;
        };
        block.adjoint = [&](std::span<const double> y) {
            const auto j2t = second.adjoint(y);
            std::vector<double> mid(y.begin(), y.end());
            for (std::size_t i = 0; i < mid.size(); ++i) mid[i] += j2t[i];
            auto out = first.adjoint(mid);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += j2t[i];
            return out;
        };
        out.push_back(sigma_max(block, pio));
    }
    return out;
}

double interpolate(std::span<const double> traj, double t) {
    if (traj.empty()) throw std::invalid_argument("interpolate: empty trajectory");
    if (traj.size() == 1) return traj[0];
    const double pos = std::clamp(t, 0.0, 1.0) * static_cast<double>(traj.size() - 1);
    const auto lo = std::min(static_cast<std::size_t>(std::floor(pos)), traj.size() - 2);
    const double frac = pos - static_cast<double>(lo);
    return traj[lo] + frac * (traj[lo + 1] - traj[lo]);
}

Comparison compare_models(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("compare_models: empty trajectory");
    Comparison cmp;
    auto add_grid = [&](std::size_t n) {
        if (n == 1) {
            cmp.grid.push_back(0.0);
            cmp.grid.push_back(1.0);
            return;
        }
        for (std::size_t k = 0; k < n; ++k) cmp.grid.push_back(static_cast<double>(k) / static_cast<double>(n - 1));
    };
    add_grid(a.size());
    add_grid(b.size());
    std::sort(cmp.grid.begin(), cmp.grid.end());
    cmp.grid.erase(std::unique(cmp.grid.begin(), cmp.grid.end()), cmp.grid.end());
    bool a_le = true;
    bool b_le = true;
    for (double t : cmp.grid) {
        const double va = interpolate(a, t);
        const double vb = interpolate(b, t);
        a_le = a_le && va <= vb;
        b_le = b_le && vb <= va;
    }
    cmp.equal = a_le && b_le;
    if (cmp.equal)
        cmp.ordering = Ordering::incomparable;
    else if (a_le)
        cmp.ordering = Ordering::a_more_robust;
    else if (b_le)
        cmp.ordering = Ordering::b_more_robust;
    return cmp;
}

}  // namespace vcl::spectral
