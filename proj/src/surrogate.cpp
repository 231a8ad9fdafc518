#include "kt/surrogate.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <utility>

#include <json.hpp>

#include "kt/error.hpp"
#include "kt/hash.hpp"
#include "kt/image_io.hpp"
#include "kt/parallel.hpp"

namespace kt {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little,
              "model serialization assumes a little-endian host");

void Architecture::validate() const {
    if (encoder_channels.empty()) throw ParamError("architecture needs at least one layer");
    for (int c : encoder_channels)
        if (c < 1) throw ParamError("channel widths must be positive");
    if (input_channels != 1 && input_channels != 2)
        throw ParamError("input_channels must be 1 (mask) or 2 (mask + signed distance)");
    const int d = depth();
    if (d > 24 || patch_size < (1 << d) || patch_size % (1 << d) != 0)
        throw ParamError("patch_size must be 2^depth times an integer bottleneck size");
}

std::vector<int> Architecture::spatial_sizes() const {
    std::vector<int> s{patch_size};
    for (int i = 0; i < depth(); ++i) s.push_back(s.back() / 2);
    return s;
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ParamError("learning rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw ParamError("Adam betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw ParamError("Adam epsilon must be positive");
    if (batch_size < 1) throw ParamError("batch_size must be >= 1");
    if (epochs < 1) throw ParamError("epochs must be >= 1");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ParamError("lr_decay must lie in (0, 1]");
    const double s = split_train + split_val + split_test;
    if (split_train < 0 || split_val < 0 || split_test < 0 || std::abs(s - 1.0) > 1e-9)
        throw ParamError("split fractions must be non-negative and sum to 1");
}

SurrogateModel make_model(const Architecture& arch, Rng& rng) {
    arch.validate();
    SurrogateModel m;
    m.arch = arch;
    const auto& ec = arch.encoder_channels;
    const int d = arch.depth();

    auto add_layer = [&](bool transposed, int in_c, int out_c, bool relu) {
        ConvLayer l;
        l.transposed = transposed;
        l.in_c = in_c;
        l.out_c = out_c;
        l.relu = relu;
        l.w.resize(size_t(l.w_count()));
        l.b.resize(size_t(out_c));
        const double bound = 1.0 / std::sqrt(double(in_c) * 9.0);
        for (double& v : l.w) v = double(float(rng.uniform(-bound, bound)));
        for (double& v : l.b) v = double(float(rng.uniform(-bound, bound)));
        m.layers.push_back(std::move(l));
    };

    int in_c = arch.input_channels;
    for (int i = 0; i < d; ++i) {
        add_layer(false, in_c, ec[i], true);
        in_c = ec[i];
    }
    for (int i = d - 1; i >= 1; --i) add_layer(true, ec[i], ec[i - 1], true);
    add_layer(true, ec[0], 1, false);  // identity output
    return m;
}

namespace {

int conv_out(int n) { return (n - 1) / 2 + 1; }  // k=3, s=2, p=1

// Strided 3x3 convolution, stride 2, zero pad 1.
void conv_forward(const Tensor& in, const ConvLayer& l, Tensor& out) {
    out = Tensor(l.out_c, conv_out(in.h), conv_out(in.w));
    for (int oc = 0; oc < l.out_c; ++oc) {
        double* op = out.plane(oc);
        std::fill(op, op + size_t(out.h) * out.w, l.b[size_t(oc)]);
        for (int ic = 0; ic < l.in_c; ++ic) {
            const double* ip = in.plane(ic);
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const double wv = l.w[((size_t(oc) * l.in_c + ic) * 3 + ky) * 3 + kx];
                    if (wv == 0.0) continue;
                    for (int oy = 0; oy < out.h; ++oy) {
                        const int iy = 2 * oy + ky - 1;
                        if (iy < 0 || iy >= in.h) continue;
                        const double* irow = ip + size_t(iy) * in.w;
                        double* orow = op + size_t(oy) * out.w;
                        const int x0 = kx == 0 ? 1 : 0;                    // ix = 2*ox+kx-1 >= 0
                        const int x1 = 2 * (out.w - 1) + kx - 1 < in.w ? out.w : out.w - 1;
                        for (int ox = x0; ox < x1; ++ox) orow[ox] += wv * irow[2 * ox + kx - 1];
                    }
                }
        }
    }
    if (l.relu)
        for (double& v : out.v) v = v > 0.0 ? v : 0.0;
}

// Transposed 3x3 convolution, stride 2, pad 1, output exactly 2x input.
void tconv_forward(const Tensor& in, const ConvLayer& l, Tensor& out) {
    out = Tensor(l.out_c, 2 * in.h, 2 * in.w);
    for (int oc = 0; oc < l.out_c; ++oc) {
        double* op = out.plane(oc);
        std::fill(op, op + size_t(out.h) * out.w, l.b[size_t(oc)]);
    }
    for (int ic = 0; ic < l.in_c; ++ic) {
        const double* ip = in.plane(ic);
        for (int oc = 0; oc < l.out_c; ++oc) {
            double* op = out.plane(oc);
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const double wv = l.w[((size_t(ic) * l.out_c + oc) * 3 + ky) * 3 + kx];
                    if (wv == 0.0) continue;
                    for (int iy = 0; iy < in.h; ++iy) {
                        const int oy = 2 * iy - 1 + ky;
                        if (oy < 0 || oy >= out.h) continue;
                        const double* irow = ip + size_t(iy) * in.w;
                        double* orow = op + size_t(oy) * out.w;
                        const int x0 = kx == 0 ? 1 : 0;  // ox = 2*ix-1+kx
                        const int x1 = 2 * (in.w - 1) - 1 + kx < out.w ? in.w : in.w - 1;
                        for (int ix = x0; ix < x1; ++ix) orow[2 * ix - 1 + kx] += wv * irow[ix];
                    }
                }
        }
    }
    if (l.relu)
        for (double& v : out.v) v = v > 0.0 ? v : 0.0;
}

void layer_forward(const Tensor& in, const ConvLayer& l, Tensor& out) {
    if (int64_t(in.c) != l.in_c) throw InternalError("layer input channel mismatch");
    if (l.transposed)
        tconv_forward(in, l, out);
    else
        conv_forward(in, l, out);
}

// dout is dL/d(post-activation) with the ReLU factor already applied.
void conv_backward(const Tensor& in, const ConvLayer& l, const Tensor& dout, Tensor& din,
                   LayerGrads& g) {
    din = Tensor(in.c, in.h, in.w);
    for (int oc = 0; oc < l.out_c; ++oc) {
        const double* dp = dout.plane(oc);
        double db = 0.0;
        for (size_t i = 0; i < size_t(dout.h) * dout.w; ++i) db += dp[i];
        g.b[size_t(oc)] += db;
        for (int ic = 0; ic < l.in_c; ++ic) {
            const double* ip = in.plane(ic);
            double* dip = din.plane(ic);
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const size_t wi = ((size_t(oc) * l.in_c + ic) * 3 + ky) * 3 + kx;
                    const double wv = l.w[wi];
                    double dw = 0.0;
                    for (int oy = 0; oy < dout.h; ++oy) {
                        const int iy = 2 * oy + ky - 1;
                        if (iy < 0 || iy >= in.h) continue;
                        const double* irow = ip + size_t(iy) * in.w;
                        double* dirow = dip + size_t(iy) * in.w;
                        const double* drow = dp + size_t(oy) * dout.w;
                        for (int ox = 0; ox < dout.w; ++ox) {
                            const int ix = 2 * ox + kx - 1;
                            if (ix < 0 || ix >= in.w) continue;
                            const double gv = drow[ox];
                            dw += gv * irow[ix];
                            dirow[ix] += gv * wv;
                        }
                    }
                    g.w[wi] += dw;
                }
        }
    }
}

void tconv_backward(const Tensor& in, const ConvLayer& l, const Tensor& dout, Tensor& din,
                    LayerGrads& g) {
    din = Tensor(in.c, in.h, in.w);
    for (int oc = 0; oc < l.out_c; ++oc) {
        const double* dp = dout.plane(oc);
        double db = 0.0;
        for (size_t i = 0; i < size_t(dout.h) * dout.w; ++i) db += dp[i];
        g.b[size_t(oc)] += db;
    }
    for (int ic = 0; ic < l.in_c; ++ic) {
        const double* ip = in.plane(ic);
        double* dip = din.plane(ic);
        for (int oc = 0; oc < l.out_c; ++oc) {
            const double* dp = dout.plane(oc);
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const size_t wi = ((size_t(ic) * l.out_c + oc) * 3 + ky) * 3 + kx;
                    const double wv = l.w[wi];
                    double dw = 0.0;
                    for (int iy = 0; iy < in.h; ++iy) {
                        const int oy = 2 * iy - 1 + ky;
                        if (oy < 0 || oy >= dout.h) continue;
                        const double* irow = ip + size_t(iy) * in.w;
                        double* dirow = dip + size_t(iy) * in.w;
                        const double* drow = dp + size_t(oy) * dout.w;
                        for (int ix = 0; ix < in.w; ++ix) {
                            const int ox = 2 * ix - 1 + kx;
                            if (ox < 0 || ox >= dout.w) continue;
                            const double gv = drow[ox];
                            dw += gv * irow[ix];
                            dirow[ix] += gv * wv;
                        }
                    }
                    g.w[wi] += dw;
                }
        }
    }
}

// Signed city-block distance to the material/void boundary: positive inside
// material, negative in void, in pixels, clamped to the patch size.
void signed_distance(const MaskGrid& mask, int cap, std::vector<int>& out) {
    const int rows = mask.rows(), cols = mask.cols();
    const int inf = 1 << 29;
    auto pass = [&](std::vector<int>& d) {
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) {
                int v = d[size_t(i) * cols + j];
                if (i > 0) v = std::min(v, d[size_t(i - 1) * cols + j] + 1);
                if (j > 0) v = std::min(v, d[size_t(i) * cols + j - 1] + 1);
                d[size_t(i) * cols + j] = v;
            }
        for (int i = rows - 1; i >= 0; --i)
            for (int j = cols - 1; j >= 0; --j) {
                int v = d[size_t(i) * cols + j];
                if (i < rows - 1) v = std::min(v, d[size_t(i + 1) * cols + j] + 1);
                if (j < cols - 1) v = std::min(v, d[size_t(i) * cols + j + 1] + 1);
                d[size_t(i) * cols + j] = v;
            }
    };
    std::vector<int> d_void(size_t(rows) * cols), d_mat(size_t(rows) * cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            const bool mat = mask(i, j) != kVoid;
            d_void[size_t(i) * cols + j] = mat ? inf : 0;
            d_mat[size_t(i) * cols + j] = mat ? 0 : inf;
        }
    pass(d_void);
    pass(d_mat);
    out.resize(size_t(rows) * cols);
    for (size_t k = 0; k < out.size(); ++k) {
        const int v = d_void[k] ? std::min(d_void[k], cap) : -std::min(d_mat[k], cap);
        out[k] = v;
    }
}

}  // namespace

Tensor model_input(const SurrogateModel& model, const MaskGrid& mask) {
    const int p = model.arch.patch_size;
    if (mask.rows() != p || mask.cols() != p)
        throw ParamError("patch shape does not match the model's patch_size");
    Tensor in(model.arch.input_channels, p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            in.at(0, i, j) =
                (mask(i, j) != kVoid ? 1.0 : 0.0) * model.norm.in_scale + model.norm.in_shift;
    if (model.arch.input_channels == 2) {
        std::vector<int> sd;
        signed_distance(mask, p, sd);
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j) in.at(1, i, j) = double(sd[size_t(i) * p + j]) / p;
    }
    return in;
}

Tensor forward(const SurrogateModel& model, const Tensor& input) {
    if (input.c != model.arch.input_channels || input.h != model.arch.patch_size ||
        input.w != model.arch.patch_size)
        throw ParamError("input tensor shape does not match the architecture");
    Tensor cur = input, next;
    for (const ConvLayer& l : model.layers) {
        layer_forward(cur, l, next);
        std::swap(cur, next);
    }
    return cur;
}

Grid<double> predict_patch(const SurrogateModel& model, const MaskGrid& mask) {
    const Tensor out = forward(model, model_input(model, mask));
    const int p = model.arch.patch_size;
    Grid<double> g(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            g(i, j) = out.at(0, i, j) * model.norm.out_std + model.norm.out_mean;
    return g;
}

namespace {

struct SampleWork {
    std::vector<Tensor> acts;  // acts[0] = input, acts[i+1] = layer i output
    Tensor dcur, dprev;
};

// Forward + loss contribution of one sample; if grads != nullptr, also
// backpropagates. Returns the masked squared-error sum (normalized units).
double sample_pass(const SurrogateModel& model, const Sample& s, double inv_total_mask,
                   std::vector<LayerGrads>* grads, SampleWork& wk) {
    const size_t nl = model.layers.size();
    wk.acts.resize(nl + 1);
    wk.acts[0] = model_input(model, s.mask);
    for (size_t li = 0; li < nl; ++li) layer_forward(wk.acts[li], model.layers[li], wk.acts[li + 1]);
    const Tensor& out = wk.acts[nl];

    const int p = model.arch.patch_size;
    const double mu = model.norm.out_mean, sd = model.norm.out_std;
    double se = 0.0;
    if (grads) wk.dcur = Tensor(out.c, out.h, out.w);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
            if (s.mask(i, j) == kVoid) continue;
            const double t = (s.kt(i, j) - mu) / sd;
            const double d = out.at(0, i, j) - t;
            se += d * d;
            if (grads) wk.dcur.at(0, i, j) = 2.0 * d * inv_total_mask;
        }
    if (!grads) return se;

    for (size_t li = nl; li-- > 0;) {
        const ConvLayer& l = model.layers[li];
        if (l.relu) {
            const Tensor& act = wk.acts[li + 1];
            for (size_t k = 0; k < wk.dcur.v.size(); ++k)
                if (!(act.v[k] > 0.0)) wk.dcur.v[k] = 0.0;
        }
        if (l.transposed)
            tconv_backward(wk.acts[li], l, wk.dcur, wk.dprev, (*grads)[li]);
        else
            conv_backward(wk.acts[li], l, wk.dcur, wk.dprev, (*grads)[li]);
        std::swap(wk.dcur, wk.dprev);
    }
    return se;
}

std::vector<LayerGrads> zero_grads(const SurrogateModel& model) {
    std::vector<LayerGrads> g(model.layers.size());
    for (size_t i = 0; i < g.size(); ++i) {
        g[i].w.assign(model.layers[i].w.size(), 0.0);
        g[i].b.assign(model.layers[i].b.size(), 0.0);
    }
    return g;
}

int64_t mask_count(const MaskGrid& m) {
    int64_t n = 0;
    for (uint8_t v : m.data()) n += v != kVoid;
    return n;
}

void check_batch(const SurrogateModel& model, const std::vector<Sample>& samples,
                 const std::vector<int>& idxs) {
    if (idxs.empty()) throw ParamError("empty batch");
    const int p = model.arch.patch_size;
    for (int i : idxs) {
        if (i < 0 || size_t(i) >= samples.size()) throw ParamError("batch index out of range");
        const Sample& s = samples[size_t(i)];
        if (s.mask.rows() != p || s.mask.cols() != p || !s.kt.same_shape(s.mask))
            throw ParamError("sample shape does not match the model's patch_size");
    }
}

}  // namespace

double masked_loss(const SurrogateModel& model, const std::vector<Sample>& samples,
                   const std::vector<int>& idxs) {
    check_batch(model, samples, idxs);
    int64_t total_mask = 0;
    for (int i : idxs) total_mask += mask_count(samples[size_t(i)].mask);
    if (total_mask == 0) return 0.0;

    const int nt = int(std::max<int64_t>(1, std::min<int64_t>(par::max_threads(), int64_t(idxs.size()))));
    std::vector<double> partial(size_t(nt), 0.0);
    KT_PRAGMA_OMP(parallel for schedule(static) num_threads(nt))
    for (int t = 0; t < nt; ++t) {
        int64_t lo, hi;
        par::chunk_range(int64_t(idxs.size()), t, nt, lo, hi);
        SampleWork wk;
        double se = 0.0;
        for (int64_t k = lo; k < hi; ++k)
            se += sample_pass(model, samples[size_t(idxs[size_t(k)])], 0.0, nullptr, wk);
        partial[size_t(t)] = se;
    }
    double se = 0.0;
    for (double v : partial) se += v;
    return se / double(total_mask);
}

BatchGrads backward(const SurrogateModel& model, const std::vector<Sample>& samples,
                    const std::vector<int>& idxs) {
    check_batch(model, samples, idxs);
    BatchGrads out;
    out.layers = zero_grads(model);
    for (int i : idxs) out.n_mask += mask_count(samples[size_t(i)].mask);
    if (out.n_mask == 0) return out;
    const double inv_mask = 1.0 / double(out.n_mask);

    const int nt = int(std::max<int64_t>(1, std::min<int64_t>(par::max_threads(), int64_t(idxs.size()))));
    std::vector<std::vector<LayerGrads>> tg;
    tg.resize(size_t(nt));
    std::vector<double> tse(size_t(nt), 0.0);
    KT_PRAGMA_OMP(parallel for schedule(static) num_threads(nt))
    for (int t = 0; t < nt; ++t) {
        int64_t lo, hi;
        par::chunk_range(int64_t(idxs.size()), t, nt, lo, hi);
        tg[size_t(t)] = zero_grads(model);
        SampleWork wk;
        double se = 0.0;
        for (int64_t k = lo; k < hi; ++k)
            se += sample_pass(model, samples[size_t(idxs[size_t(k)])], inv_mask, &tg[size_t(t)], wk);
        tse[size_t(t)] = se;
    }
    double se = 0.0;
    for (int t = 0; t < nt; ++t) {  // fixed combine order: bitwise thread-count-stable sums
        se += tse[size_t(t)];
        for (size_t li = 0; li < out.layers.size(); ++li) {
            for (size_t k = 0; k < out.layers[li].w.size(); ++k)
                out.layers[li].w[k] += tg[size_t(t)][li].w[k];
            for (size_t k = 0; k < out.layers[li].b.size(); ++k)
                out.layers[li].b[k] += tg[size_t(t)][li].b[k];
        }
    }
    out.loss = se / double(out.n_mask);
    return out;
}

Normalization compute_normalization(const Dataset& ds) {
    Normalization n;
    n.pixel_pitch_um = ds.pixel_pitch_um;
    double sum = 0.0;
    int64_t cnt = 0;
    for (int i : ds.train_idx) {
        const Sample& s = ds.samples[size_t(i)];
        for (int r = 0; r < s.mask.rows(); ++r)
            for (int c = 0; c < s.mask.cols(); ++c)
                if (s.mask(r, c) != kVoid) {
                    sum += s.kt(r, c);
                    ++cnt;
                }
    }
    if (cnt == 0) throw ParamError("train split has no material pixels to normalize against");
    n.out_mean = sum / double(cnt);
    double ss = 0.0;
    for (int i : ds.train_idx) {
        const Sample& s = ds.samples[size_t(i)];
        for (int r = 0; r < s.mask.rows(); ++r)
            for (int c = 0; c < s.mask.cols(); ++c)
                if (s.mask(r, c) != kVoid) {
                    const double d = s.kt(r, c) - n.out_mean;
                    ss += d * d;
                }
    }
    n.out_std = std::sqrt(ss / double(cnt));
    if (!(n.out_std > 1e-12)) n.out_std = 1.0;
    return n;
}

namespace {

struct AdamState {
    std::vector<std::vector<double>> mw, vw, mb, vb;
    int64_t t = 0;
};

AdamState adam_init(const SurrogateModel& model) {
    AdamState st;
    for (const ConvLayer& l : model.layers) {
        st.mw.emplace_back(l.w.size(), 0.0);
        st.vw.emplace_back(l.w.size(), 0.0);
        st.mb.emplace_back(l.b.size(), 0.0);
        st.vb.emplace_back(l.b.size(), 0.0);
    }
    return st;
}

void adam_step(SurrogateModel& model, const BatchGrads& g, AdamState& st, const TrainConfig& cfg,
               double lr) {
    st.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(st.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(st.t));
    auto update = [&](std::vector<double>& w, const std::vector<double>& gw,
                      std::vector<double>& m, std::vector<double>& v) {
        for (size_t k = 0; k < w.size(); ++k) {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gw[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gw[k] * gw[k];
            const double step = lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg.eps);
            w[k] = double(float(w[k] - step));  // keep weights exactly f32-representable
        }
    };
    for (size_t li = 0; li < model.layers.size(); ++li) {
        update(model.layers[li].w, g.layers[li].w, st.mw[li], st.vw[li]);
        update(model.layers[li].b, g.layers[li].b, st.mb[li], st.vb[li]);
    }
}

}  // namespace

SurrogateModel train(const Dataset& ds, const Architecture& arch, const TrainConfig& config,
                     TrainLog* log) {
    config.validate();
    arch.validate();
    if (ds.train_idx.empty()) throw ParamError("dataset has an empty train split");
    if (int64_t(ds.samples.size()) < config.batch_size)
        throw ParamError("dataset smaller than one batch");

    Rng rng(config.seed);
    SurrogateModel model = make_model(arch, rng);
    model.norm = compute_normalization(ds);
    check_batch(model, ds.samples, ds.train_idx);

    AdamState adam = adam_init(model);
    const std::vector<int>& val_idx = !ds.val_idx.empty() ? ds.val_idx : ds.train_idx;
    const double initial_val = masked_loss(model, ds.samples, val_idx);

    std::vector<ConvLayer> best_layers = model.layers;
    double best_val = initial_val;
    int best_epoch = 0;

    const int m1 = std::max(1, int(config.decay_at1 * config.epochs));
    const int m2 = std::max(1, int(config.decay_at2 * config.epochs));
    std::vector<int> order = ds.train_idx;
    double train_loss = 0.0, val_loss = initial_val;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        double lr = config.lr;
        if (epoch > m1) lr *= config.lr_decay;
        if (epoch > m2) lr *= config.lr_decay;

        rng.shuffle(order);
        double se_sum = 0.0;
        int64_t mask_sum = 0;
        for (size_t off = 0; off < order.size(); off += size_t(config.batch_size)) {
            const size_t end = std::min(order.size(), off + size_t(config.batch_size));
            const std::vector<int> batch(order.begin() + off, order.begin() + end);
            const BatchGrads g = backward(model, ds.samples, batch);
            if (!std::isfinite(g.loss))
                throw SolverError("training diverged: non-finite loss at epoch " +
                                      std::to_string(epoch),
                                  g.loss, epoch);
            adam_step(model, g, adam, config, lr);
            se_sum += g.loss * double(g.n_mask);
            mask_sum += g.n_mask;
        }
        train_loss = mask_sum > 0 ? se_sum / double(mask_sum) : 0.0;
        val_loss = masked_loss(model, ds.samples, val_idx);
        if (val_loss < best_val) {
            best_val = val_loss;
            best_layers = model.layers;
            best_epoch = epoch;
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (log) log->push_back({epoch, lr, train_loss, val_loss, secs});
        if (config.verbose)
            std::fprintf(stderr, "epoch %4d  lr %.2e  train %.6f  val %.6f  (%.1fs)\n", epoch,
                         lr, train_loss, val_loss, secs);
    }

    model.layers = std::move(best_layers);
    model.meta.dataset_hash = ds.manifest_hash;
    model.meta.seed = config.seed;
    model.meta.epochs = config.epochs;
    model.meta.best_epoch = best_epoch;
    model.meta.initial_val_loss = initial_val;
    model.meta.final_train_loss = train_loss;
    model.meta.final_val_loss = val_loss;
    model.meta.best_val_loss = best_val;
    return model;
}

namespace {

int reflect101(int k, int n) {
    while (k < 0 || k >= n) {
        if (k < 0) k = -k;
        if (k >= n) k = 2 * n - 2 - k;
    }
    return k;
}

}  // namespace

KtField predict_large(const SurrogateModel& model, const SurfaceSlice& slice) {
    const int p = model.arch.patch_size;
    const int rows = slice.rows(), cols = slice.cols();
    if (std::abs(slice.pixel_pitch_um - model.norm.pixel_pitch_um) >
        1e-9 * std::max(1.0, model.norm.pixel_pitch_um))
        throw ParamError("slice pixel pitch differs from the model's training pitch");
    if (rows < p / 2 || cols < p / 2)
        throw GeometryError("slice dimensions must be at least half the patch size");

    // Reflect-pad dimensions smaller than one patch.
    const int ph = std::max(rows, p), pw = std::max(cols, p);
    const int top = (ph - rows) / 2, left = (pw - cols) / 2;
    MaskGrid padded(ph, pw);
    for (int i = 0; i < ph; ++i)
        for (int j = 0; j < pw; ++j)
            padded(i, j) = slice.mask(reflect101(i - top, rows), reflect101(j - left, cols));

    constexpr int kOverlap = 32;
    const int stride = p - kOverlap;
    const int margin = kOverlap / 2;
    auto origins = [&](int extent) {
        std::vector<int> v;
        for (int o = 0; o + p < extent; o += stride) v.push_back(o);
        v.push_back(extent - p);
        return v;
    };
    const std::vector<int> ys = origins(ph), xs = origins(pw);

    Grid<double> out(ph, pw, 0.0);
    MaskGrid patch(p, p);
    for (int y0 : ys)
        for (int x0 : xs) {
            for (int i = 0; i < p; ++i)
                for (int j = 0; j < p; ++j) patch(i, j) = padded(y0 + i, x0 + j);
            const Grid<double> pred = predict_patch(model, patch);
            const int ry0 = y0 == 0 ? 0 : y0 + margin;
            const int ry1 = y0 == ph - p ? ph : y0 + p - margin;
            const int rx0 = x0 == 0 ? 0 : x0 + margin;
            const int rx1 = x0 == pw - p ? pw : x0 + p - margin;
            for (int i = ry0; i < ry1; ++i)
                for (int j = rx0; j < rx1; ++j) out(i, j) = pred(i - y0, j - x0);
        }

    KtField field;
    field.values = Grid<double>(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            field.values(i, j) =
                slice.is_material(i, j) ? out(i + top, j + left) : KtField::void_value();
    field.sigma_nominal = 0.0;
    return field;
}

// ---- serialization ----------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'K', 'T', 'S', 'M'};
constexpr uint32_t kVersion = 1;

ordered_json arch_json(const Architecture& a) {
    return {{"patch_size", a.patch_size},
            {"input_channels", a.input_channels},
            {"encoder_channels", a.encoder_channels}};
}

std::vector<ConvLayer> layer_skeleton(const Architecture& arch) {
    Rng dummy(0);
    SurrogateModel m = make_model(arch, dummy);
    return std::move(m.layers);
}

}  // namespace

void save_model(const std::filesystem::path& path, const SurrogateModel& model) {
    model.arch.validate();
    ordered_json hdr;
    hdr["arch"] = arch_json(model.arch);
    hdr["normalization"] = {{"in_scale", model.norm.in_scale},
                            {"in_shift", model.norm.in_shift},
                            {"out_mean", model.norm.out_mean},
                            {"out_std", model.norm.out_std},
                            {"pixel_pitch_um", model.norm.pixel_pitch_um}};
    hdr["meta"] = {{"dataset_hash", model.meta.dataset_hash},
                   {"seed", model.meta.seed},
                   {"epochs", model.meta.epochs},
                   {"best_epoch", model.meta.best_epoch},
                   {"initial_val_loss", model.meta.initial_val_loss},
                   {"final_train_loss", model.meta.final_train_loss},
                   {"final_val_loss", model.meta.final_val_loss},
                   {"best_val_loss", model.meta.best_val_loss}};
    ordered_json layers = ordered_json::array();
    for (const ConvLayer& l : model.layers)
        layers.push_back({{"type", l.transposed ? "tconv" : "conv"},
                          {"in", l.in_c},
                          {"out", l.out_c},
                          {"kernel", 3},
                          {"stride", 2},
                          {"pad", 1},
                          {"relu", l.relu}});
    hdr["layers"] = layers;

    const std::string header = hdr.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(kMagic, 4);
    const uint32_t ver = kVersion, hlen = uint32_t(header.size());
    out.write(reinterpret_cast<const char*>(&ver), 4);
    out.write(reinterpret_cast<const char*>(&hlen), 4);
    out.write(header.data(), std::streamsize(header.size()));
    std::vector<float> buf;
    for (const ConvLayer& l : model.layers) {
        buf.assign(l.w.begin(), l.w.end());
        out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * 4));
        buf.assign(l.b.begin(), l.b.end());
        out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * 4));
    }
    if (!out) throw IoError("write failed: " + path.string());
}

SurrogateModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw FormatError("not a KTSM model file: " + path.string());
    uint32_t ver = 0, hlen = 0;
    std::memcpy(&ver, bytes.data() + 4, 4);
    std::memcpy(&hlen, bytes.data() + 8, 4);
    if (ver != kVersion)
        throw FormatError("unsupported model version " + std::to_string(ver) + " (expected " +
                          std::to_string(kVersion) + ")");
    if (bytes.size() < 12 + size_t(hlen)) throw FormatError("truncated model header");

    SurrogateModel model;
    try {
        const json hdr = json::parse(bytes.begin() + 12, bytes.begin() + 12 + hlen);
        const json& aj = hdr.at("arch");
        model.arch.patch_size = aj.at("patch_size").get<int>();
        model.arch.input_channels = aj.at("input_channels").get<int>();
        model.arch.encoder_channels = aj.at("encoder_channels").get<std::vector<int>>();
        model.arch.validate();

        const json& nj = hdr.at("normalization");
        model.norm.in_scale = nj.at("in_scale").get<double>();
        model.norm.in_shift = nj.at("in_shift").get<double>();
        model.norm.out_mean = nj.at("out_mean").get<double>();
        model.norm.out_std = nj.at("out_std").get<double>();
        model.norm.pixel_pitch_um = nj.at("pixel_pitch_um").get<double>();

        if (hdr.contains("meta")) {
            const json& mj = hdr.at("meta");
            model.meta.dataset_hash = mj.value("dataset_hash", std::string());
            model.meta.seed = mj.value("seed", uint64_t(0));
            model.meta.epochs = mj.value("epochs", 0);
            model.meta.best_epoch = mj.value("best_epoch", 0);
            model.meta.initial_val_loss = mj.value("initial_val_loss", 0.0);
            model.meta.final_train_loss = mj.value("final_train_loss", 0.0);
            model.meta.final_val_loss = mj.value("final_val_loss", 0.0);
            model.meta.best_val_loss = mj.value("best_val_loss", 0.0);
        }

        model.layers = layer_skeleton(model.arch);
        const json& lj = hdr.at("layers");
        if (lj.size() != model.layers.size())
            throw FormatError("model layer table inconsistent with the architecture");
        for (size_t i = 0; i < model.layers.size(); ++i) {
            const ConvLayer& l = model.layers[i];
            if (lj[i].at("type").get<std::string>() != (l.transposed ? "tconv" : "conv") ||
                lj[i].at("in").get<int>() != l.in_c || lj[i].at("out").get<int>() != l.out_c ||
                lj[i].at("relu").get<bool>() != l.relu)
                throw FormatError("model layer table inconsistent with the architecture");
        }
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw FormatError("malformed model header in " + path.string() + ": " + e.what());
    }

    size_t expect = 0;
    for (const ConvLayer& l : model.layers) expect += (l.w.size() + l.b.size()) * 4;
    const size_t have = bytes.size() - 12 - hlen;
    if (have < expect) throw FormatError("truncated model weights: " + path.string());
    if (have > expect) throw FormatError("trailing bytes after model weights: " + path.string());

    const char* p = bytes.data() + 12 + hlen;
    auto read_block = [&](std::vector<double>& dst) {
        for (double& v : dst) {
            float f;
            std::memcpy(&f, p, 4);
            p += 4;
            if (!std::isfinite(f)) throw FormatError("non-finite weight in " + path.string());
            v = double(f);
        }
    };
    for (ConvLayer& l : model.layers) {
        read_block(l.w);
        read_block(l.b);
    }
    return model;
}

// ---- dataset ----------------------------------------------------------------

void DatasetSpec::validate() const {
    if (n_samples < 1) throw ParamError("n_samples must be >= 1");
    if (patch_size < 8 || gen_rows < patch_size)
        throw ParamError("patch_size must be >= 8 and gen_rows >= patch_size");
    if (!(pixel_pitch_um > 0.0)) throw ParamError("pixel pitch must be positive");
    if (!(r_inner_um >= 0.0)) throw ParamError("inner radius must be non-negative");
    auto range_ok = [](double lo, double hi) { return lo > 0.0 && hi >= lo; };
    if (!range_ok(ranges.rms_um_lo, ranges.rms_um_hi) ||
        !range_ok(ranges.corr_um_lo, ranges.corr_um_hi) ||
        !range_ok(ranges.offset_um_lo, ranges.offset_um_hi))
        throw ParamError("roughness parameter ranges must be positive with lo <= hi");
    const double s = split_train + split_val + split_test;
    if (split_train < 0 || split_val < 0 || split_test < 0 || std::abs(s - 1.0) > 1e-9)
        throw ParamError("split fractions must be non-negative and sum to 1");
    material.validate();
    fem.validate();
}

namespace {

std::string sample_id(int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%05d", i);
    return buf;
}

RoughnessParams sample_params(const DatasetSpec& spec, int i) {
    RoughnessParams rp;
    rp.seed = Rng::derive(spec.seed, uint64_t(i));
    Rng rng(rp.seed);
    rp.rms_amplitude_um = rng.uniform(spec.ranges.rms_um_lo, spec.ranges.rms_um_hi);
    rp.correlation_length_um = rng.uniform(spec.ranges.corr_um_lo, spec.ranges.corr_um_hi);
    rp.mean_bore_offset_um = rng.uniform(spec.ranges.offset_um_lo, spec.ranges.offset_um_hi);
    return rp;
}

std::string mode_name(AnalysisMode m) {
    return m == AnalysisMode::axisymmetric ? "axisymmetric" : "plane_stress";
}

uint64_t fem_config_hash(const DatasetSpec& spec) {
    ordered_json j = {{"mode", mode_name(spec.fem.mode)},
                      {"bc", spec.fem.bc == BcKind::traction ? "traction" : "displacement"},
                      {"bc_value", spec.fem.bc_value},
                      {"cg_rel_tol", spec.fem.cg_rel_tol},
                      {"youngs_modulus", spec.material.youngs_modulus},
                      {"poisson_ratio", spec.material.poisson_ratio}};
    return fnv1a64(j.dump());
}

double finite_max(const Grid<double>& g) {
    double m = 0.0;
    for (double v : g.data())
        if (std::isfinite(v)) m = std::max(m, v);
    return m;
}

}  // namespace

DatasetBuildResult make_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    std::filesystem::create_directories(out_dir);

    DatasetBuildResult res;
    ordered_json rows = ordered_json::array();
    std::vector<int> ok_indices;

    for (int i = 0; i < spec.n_samples; ++i) {
        const std::string id = sample_id(i);
        const auto pgm = out_dir / (id + ".pgm");
        const auto pfm = out_dir / (id + ".pfm");
        const RoughnessParams rp = sample_params(spec, i);

        ordered_json row = {{"id", id},
                            {"seed", rp.seed},
                            {"rms_um", rp.rms_amplitude_um},
                            {"corr_um", rp.correlation_length_um},
                            {"offset_um", rp.mean_bore_offset_um}};

        double max_kt = 0.0;
        bool have = false;
        if (std::filesystem::exists(pgm) && std::filesystem::exists(pfm)) {
            try {
                const Grid<double> kt = read_pfm(pfm.string());
                const SurfaceSlice s = load_slice(pgm.string());
                if (kt.rows() == spec.patch_size && kt.cols() == spec.patch_size &&
                    s.rows() == spec.patch_size && s.cols() == spec.patch_size) {
                    max_kt = finite_max(kt);
                    have = true;
                    ++res.reused;
                }
            } catch (const Error&) {
                have = false;  // regenerate a damaged pair
            }
        }

        if (!have) {
            try {
                const SurfaceSlice full = generate_slice(rp, spec.gen_rows, spec.patch_size,
                                                         spec.pixel_pitch_um, spec.r_inner_um);
                const KtField field = solve_slice(full, spec.material, spec.fem);

                // Central crop: the kept window is far from the loaded faces,
                // so patches look like the interior of a long rough cylinder.
                const int r0 = (spec.gen_rows - spec.patch_size) / 2;
                SurfaceSlice crop;
                crop.pixel_pitch_um = full.pixel_pitch_um;
                crop.r_inner_nominal_um = full.r_inner_nominal_um;
                crop.meta = full.meta;
                crop.mask = MaskGrid(spec.patch_size, spec.patch_size);
                Grid<double> kt(spec.patch_size, spec.patch_size);
                for (int r = 0; r < spec.patch_size; ++r)
                    for (int c = 0; c < spec.patch_size; ++c) {
                        crop.mask(r, c) = full.mask(r0 + r, c);
                        kt(r, c) = field.values(r0 + r, c);
                    }
                // Re-normalize to the crop's own net section so the mask alone
                // determines the target field.
                const double scale =
                    nominal_net_area(crop, spec.fem.mode) / nominal_net_area(full, spec.fem.mode);
                for (double& v : kt.data())
                    if (std::isfinite(v)) v *= scale;

                save_slice(crop, pgm.string());
                write_pfm(pfm.string(), kt);
                max_kt = finite_max(kt);
                have = true;
                ++res.generated;
            } catch (const Error& e) {
                row["status"] = std::string("failed: ") + e.what();
                ++res.failed;
            }
        }

        if (have) {
            row["status"] = "ok";
            row["max_kt"] = max_kt;
            ok_indices.push_back(int(rows.size()));
        }
        rows.push_back(std::move(row));
    }

    // Split assignment depends only on the seed and which samples succeeded.
    std::vector<int> shuffled = ok_indices;
    Rng split_rng(Rng::derive(spec.seed, 0xA110C5EEDull));
    split_rng.shuffle(shuffled);
    const int n_ok = int(shuffled.size());
    const int n_val = int(spec.split_val * n_ok);
    const int n_test = int(spec.split_test * n_ok);
    for (int k = 0; k < n_ok; ++k) {
        const char* split = k < n_val ? "val" : (k < n_val + n_test ? "test" : "train");
        rows[size_t(shuffled[size_t(k)])]["split"] = split;
    }

    ordered_json manifest = {
        {"n_samples", spec.n_samples},
        {"seed", spec.seed},
        {"pixel_pitch_um", spec.pixel_pitch_um},
        {"r_inner_um", spec.r_inner_um},
        {"patch_size", spec.patch_size},
        {"gen_rows", spec.gen_rows},
        {"mode", mode_name(spec.fem.mode)},
        {"fem_config_hash", hex64(fem_config_hash(spec))},
        {"ranges",
         {{"rms_um", {spec.ranges.rms_um_lo, spec.ranges.rms_um_hi}},
          {"corr_um", {spec.ranges.corr_um_lo, spec.ranges.corr_um_hi}},
          {"offset_um", {spec.ranges.offset_um_lo, spec.ranges.offset_um_hi}}}},
        {"splits",
         {{"train", spec.split_train}, {"val", spec.split_val}, {"test", spec.split_test}}},
        {"samples", std::move(rows)}};

    res.manifest = out_dir / "manifest.json";
    std::ofstream out(res.manifest, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + res.manifest.string());
    out << manifest.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + res.manifest.string());
    return res;
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset manifest: " + manifest_path.string());
    json manifest;
    try {
        in >> manifest;
    } catch (const std::exception& e) {
        throw FormatError("malformed dataset manifest: " + std::string(e.what()));
    }

    Dataset ds;
    try {
        ds.pixel_pitch_um = manifest.at("pixel_pitch_um").get<double>();
        ds.r_inner_um = manifest.at("r_inner_um").get<double>();
        const int patch = manifest.at("patch_size").get<int>();
        for (const json& row : manifest.at("samples")) {
            if (row.value("status", std::string()) != "ok") continue;
            Sample s;
            s.id = row.at("id").get<std::string>();
            s.split = row.value("split", "train");
            const SurfaceSlice slice = load_slice((dir / (s.id + ".pgm")).string());
            s.mask = slice.mask;
            s.kt = read_pfm((dir / (s.id + ".pfm")).string());
            if (s.mask.rows() != patch || s.mask.cols() != patch || !s.kt.same_shape(s.mask))
                throw FormatError("dataset sample " + s.id + " has inconsistent dimensions");
            for (int r = 0; r < patch; ++r)
                for (int c = 0; c < patch; ++c)
                    if (s.mask(r, c) != kVoid && !std::isfinite(s.kt(r, c)))
                        throw FormatError("dataset sample " + s.id +
                                          " has a non-finite K_t on material");
            const int idx = int(ds.samples.size());
            if (s.split == "val")
                ds.val_idx.push_back(idx);
            else if (s.split == "test")
                ds.test_idx.push_back(idx);
            else
                ds.train_idx.push_back(idx);
            ds.samples.push_back(std::move(s));
        }
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw FormatError("malformed dataset manifest: " + std::string(e.what()));
    }
    ds.manifest_hash = hex64(fnv1a64_file(manifest_path.string()));
    return ds;
}

}  // namespace kt
