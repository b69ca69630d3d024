#include "etcnas/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace etcnas {

namespace {

constexpr double kBnEps = 1e-3;
constexpr double kBnMomentum = 0.99;

int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

int64_t pad_left_for(int64_t in_len, int64_t k, int64_t s) {
    int64_t out_len = ceil_div(in_len, s);
    int64_t total = std::max<int64_t>(0, (out_len - 1) * s + k - in_len);
    return total / 2;
}

double glorot_limit(int64_t fan_in, int64_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void fill_glorot(Tensor& t, int64_t fan_in, int64_t fan_out,
                 std::mt19937_64& rng) {
    double lim = glorot_limit(fan_in, fan_out);
    std::uniform_real_distribution<double> d(-lim, lim);
    for (double& v : t.data) v = d(rng);
}

struct NodeState {
    Tensor out;
    Tensor cache;               // layer-specific (sepconv mid, BN xhat, ...)
    Tensor mask;                // dropout mask
    std::vector<int64_t> argmax;
    std::vector<double> mean, var; // BN batch statistics
};

bool is_1d(const Tensor& t) { return t.shape.size() == 3; }

} // namespace

ModelInstance init_params(const ModelGraph& graph, uint64_t rng_seed) {
    validate(graph);
    auto shapes = infer_shapes(graph);
    ModelInstance model;
    model.graph = graph;
    std::mt19937_64 rng(rng_seed);
    for (const auto& [id, spec] : graph.nodes) {
        auto in_ids = graph.inputs_of(id);
        int64_t c_in = in_ids.empty() ? 0 : shapes.at(in_ids[0]).channels;
        auto& p = model.params[id];
        switch (spec.kind) {
        case LayerKind::Conv1D: {
            Tensor w({spec.kernel_size, c_in, spec.filters});
            fill_glorot(w, spec.kernel_size * c_in, spec.kernel_size * spec.filters,
                        rng);
            p["W"] = std::move(w);
            p["b"] = Tensor({spec.filters});
            break;
        }
        case LayerKind::SeparableConv1D: {
            Tensor dw({spec.kernel_size, c_in});
            fill_glorot(dw, spec.kernel_size, spec.kernel_size, rng);
            Tensor pw({c_in, spec.filters});
            fill_glorot(pw, c_in, spec.filters, rng);
            p["dw"] = std::move(dw);
            p["pw"] = std::move(pw);
            p["b"] = Tensor({spec.filters});
            break;
        }
        case LayerKind::Dense: {
            Tensor w({c_in, spec.units});
            fill_glorot(w, c_in, spec.units, rng);
            p["W"] = std::move(w);
            p["b"] = Tensor({spec.units});
            break;
        }
        case LayerKind::BatchNorm: {
            Tensor gamma({c_in}), beta({c_in}), mmean({c_in}), mvar({c_in});
            std::fill(gamma.data.begin(), gamma.data.end(), 1.0);
            std::fill(mvar.data.begin(), mvar.data.end(), 1.0);
            p["gamma"] = std::move(gamma);
            p["beta"] = std::move(beta);
            p["mmean"] = std::move(mmean);
            p["mvar"] = std::move(mvar);
            break;
        }
        default:
            model.params.erase(id);
            break;
        }
    }
    // zero-initialized Adam moments mirroring the parameter shapes
    for (const auto& [id, tensors] : model.params)
        for (const auto& [name, t] : tensors) {
            model.adam_m[id][name] = Tensor(t.shape);
            model.adam_v[id][name] = Tensor(t.shape);
        }
    return model;
}

namespace {

// ---- forward kernels -------------------------------------------------------

Tensor conv1d_fwd(const Tensor& x, const Tensor& w, const Tensor& b,
                  int64_t stride) {
    int64_t n = x.shape[0], l = x.shape[1], c = x.shape[2];
    int64_t k = w.shape[0], f = w.shape[2];
    int64_t lo_max = ceil_div(l, stride);
    int64_t pad = pad_left_for(l, k, stride);
    Tensor y({n, lo_max, f});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t lo = 0; lo < lo_max; ++lo) {
            double* yr = &y.data[(i * lo_max + lo) * f];
            for (int64_t jf = 0; jf < f; ++jf) yr[jf] = b.data[jf];
            for (int64_t j = 0; j < k; ++j) {
                int64_t li = lo * stride + j - pad;
                if (li < 0 || li >= l) continue;
                const double* xr = &x.data[(i * l + li) * c];
                const double* wr = &w.data[j * c * f];
                for (int64_t ci = 0; ci < c; ++ci) {
                    double xv = xr[ci];
                    const double* wc = wr + ci * f;
                    for (int64_t jf = 0; jf < f; ++jf) yr[jf] += xv * wc[jf];
                }
            }
        }
    return y;
}

void conv1d_bwd(const Tensor& x, const Tensor& w, int64_t stride,
                const Tensor& dy, Tensor& dx, Tensor& dw, Tensor& db) {
    int64_t n = x.shape[0], l = x.shape[1], c = x.shape[2];
    int64_t k = w.shape[0], f = w.shape[2];
    int64_t lo_max = dy.shape[1];
    int64_t pad = pad_left_for(l, k, stride);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t lo = 0; lo < lo_max; ++lo) {
            const double* gyr = &dy.data[(i * lo_max + lo) * f];
            for (int64_t jf = 0; jf < f; ++jf) db.data[jf] += gyr[jf];
            for (int64_t j = 0; j < k; ++j) {
                int64_t li = lo * stride + j - pad;
                if (li < 0 || li >= l) continue;
                const double* xr = &x.data[(i * l + li) * c];
                double* dxr = &dx.data[(i * l + li) * c];
                for (int64_t ci = 0; ci < c; ++ci) {
                    const double* wc = &w.data[(j * c + ci) * f];
                    double* dwc = &dw.data[(j * c + ci) * f];
                    double xv = xr[ci];
                    double acc = 0.0;
                    for (int64_t jf = 0; jf < f; ++jf) {
                        dwc[jf] += gyr[jf] * xv;
                        acc += gyr[jf] * wc[jf];
                    }
                    dxr[ci] += acc;
                }
            }
        }
}

Tensor depthwise_fwd(const Tensor& x, const Tensor& dw, int64_t stride) {
    int64_t n = x.shape[0], l = x.shape[1], c = x.shape[2];
    int64_t k = dw.shape[0];
    int64_t lo_max = ceil_div(l, stride);
    int64_t pad = pad_left_for(l, k, stride);
    Tensor y({n, lo_max, c});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t lo = 0; lo < lo_max; ++lo) {
            double* yr = &y.data[(i * lo_max + lo) * c];
            for (int64_t j = 0; j < k; ++j) {
                int64_t li = lo * stride + j - pad;
                if (li < 0 || li >= l) continue;
                const double* xr = &x.data[(i * l + li) * c];
                const double* wr = &dw.data[j * c];
                for (int64_t ci = 0; ci < c; ++ci) yr[ci] += xr[ci] * wr[ci];
            }
        }
    return y;
}

Tensor matmul_bias(const Tensor& x, const Tensor& w, const Tensor& b) {
    // x: (M, U_in) collapsed over leading dims, w: (U_in, U_out)
    int64_t m = x.elements() / x.shape.back();
    int64_t u_in = w.shape[0], u_out = w.shape[1];
    std::vector<int64_t> yshape = x.shape;
    yshape.back() = u_out;
    Tensor y(yshape);
    for (int64_t i = 0; i < m; ++i) {
        double* yr = &y.data[i * u_out];
        for (int64_t o = 0; o < u_out; ++o) yr[o] = b.data[o];
        const double* xr = &x.data[i * u_in];
        for (int64_t j = 0; j < u_in; ++j) {
            double xv = xr[j];
            const double* wr = &w.data[j * u_out];
            for (int64_t o = 0; o < u_out; ++o) yr[o] += xv * wr[o];
        }
    }
    return y;
}

void matmul_bias_bwd(const Tensor& x, const Tensor& w, const Tensor& dy,
                     Tensor& dx, Tensor& dw, Tensor& db) {
    int64_t m = x.elements() / x.shape.back();
    int64_t u_in = w.shape[0], u_out = w.shape[1];
    for (int64_t i = 0; i < m; ++i) {
        const double* gyr = &dy.data[i * u_out];
        const double* xr = &x.data[i * u_in];
        double* dxr = &dx.data[i * u_in];
        for (int64_t o = 0; o < u_out; ++o) db.data[o] += gyr[o];
        for (int64_t j = 0; j < u_in; ++j) {
            const double* wr = &w.data[j * u_out];
            double* dwr = &dw.data[j * u_out];
            double acc = 0.0;
            double xv = xr[j];
            for (int64_t o = 0; o < u_out; ++o) {
                dwr[o] += gyr[o] * xv;
                acc += gyr[o] * wr[o];
            }
            dxr[j] += acc;
        }
    }
}

// ---- executor ---------------------------------------------------------------

struct Executor {
    ModelInstance& model;
    Mode mode;
    std::mt19937_64* rng;
    std::map<NodeId, NodeState> states;
    std::vector<NodeId> order;
    NodeId softmax_id = -1;

    Executor(ModelInstance& m, Mode mo, std::mt19937_64* r)
        : model(m), mode(mo), rng(r) {
        order = model.graph.topological_order();
        for (const auto& [id, spec] : model.graph.nodes)
            if (spec.kind == LayerKind::Softmax) softmax_id = id;
    }

    std::mt19937_64& rng_ref() {
        static thread_local std::mt19937_64 fallback(0);
        return rng ? *rng : fallback;
    }

    void run(const Tensor& batch) {
        for (NodeId id : order) eval_node(id, batch);
    }

    const Tensor& out(NodeId id) const { return states.at(id).out; }

    void eval_node(NodeId id, const Tensor& batch) {
        const LayerSpec& spec = model.graph.spec_of(id);
        auto in_ids = model.graph.inputs_of(id);
        NodeState st;
        switch (spec.kind) {
        case LayerKind::Input: {
            if (spec.reshape2d)
                throw ShapeMismatch("engine executes 1D graphs only");
            if (batch.shape.size() != 3 ||
                batch.shape[1] != model.graph.input_length ||
                batch.shape[2] != model.graph.input_channels)
                throw ShapeMismatch("batch shape does not match graph input");
            st.out = batch;
            break;
        }
        case LayerKind::Conv1D: {
            const Tensor& x = out(in_ids[0]);
            if (!is_1d(x)) throw ShapeMismatch("conv over flattened input");
            auto& p = model.params.at(id);
            st.out = conv1d_fwd(x, p.at("W"), p.at("b"), spec.stride);
            break;
        }
        case LayerKind::SeparableConv1D: {
            const Tensor& x = out(in_ids[0]);
            if (!is_1d(x)) throw ShapeMismatch("conv over flattened input");
            auto& p = model.params.at(id);
            st.cache = depthwise_fwd(x, p.at("dw"), spec.stride);
            st.out = matmul_bias(st.cache, p.at("pw"), p.at("b"));
            break;
        }
        case LayerKind::Dense: {
            const Tensor& x = out(in_ids[0]);
            if (x.shape.size() != 2)
                throw ShapeMismatch("Dense requires flattened input");
            auto& p = model.params.at(id);
            st.out = matmul_bias(x, p.at("W"), p.at("b"));
            break;
        }
        case LayerKind::BatchNorm: {
            const Tensor& x = out(in_ids[0]);
            int64_t c = x.shape.back();
            int64_t m_count = x.elements() / c;
            auto& p = model.params.at(id);
            const auto& gamma = p.at("gamma");
            const auto& beta = p.at("beta");
            st.mean.assign(c, 0.0);
            st.var.assign(c, 0.0);
            if (mode == Mode::Train) {
                for (int64_t i = 0; i < m_count; ++i)
                    for (int64_t ci = 0; ci < c; ++ci)
                        st.mean[ci] += x.data[i * c + ci];
                for (double& v : st.mean) v /= static_cast<double>(m_count);
                for (int64_t i = 0; i < m_count; ++i)
                    for (int64_t ci = 0; ci < c; ++ci) {
                        double d = x.data[i * c + ci] - st.mean[ci];
                        st.var[ci] += d * d;
                    }
                for (double& v : st.var) v /= static_cast<double>(m_count);
                auto& mm = p.at("mmean");
                auto& mv = p.at("mvar");
                for (int64_t ci = 0; ci < c; ++ci) {
                    mm.data[ci] = kBnMomentum * mm.data[ci] +
                                  (1.0 - kBnMomentum) * st.mean[ci];
                    mv.data[ci] = kBnMomentum * mv.data[ci] +
                                  (1.0 - kBnMomentum) * st.var[ci];
                }
            } else {
                const auto& mm = p.at("mmean");
                const auto& mv = p.at("mvar");
                st.mean.assign(mm.data.begin(), mm.data.end());
                st.var.assign(mv.data.begin(), mv.data.end());
            }
            st.cache = Tensor(x.shape); // xhat
            st.out = Tensor(x.shape);
            for (int64_t i = 0; i < m_count; ++i)
                for (int64_t ci = 0; ci < c; ++ci) {
                    double xhat = (x.data[i * c + ci] - st.mean[ci]) /
                                  std::sqrt(st.var[ci] + kBnEps);
                    st.cache.data[i * c + ci] = xhat;
                    st.out.data[i * c + ci] =
                        gamma.data[ci] * xhat + beta.data[ci];
                }
            break;
        }
        case LayerKind::Dropout: {
            const Tensor& x = out(in_ids[0]);
            if (mode == Mode::Eval || spec.rate == 0.0) {
                st.out = x;
            } else {
                double keep = 1.0 - spec.rate;
                std::bernoulli_distribution d(keep);
                st.mask = Tensor(x.shape);
                st.out = Tensor(x.shape);
                auto& r = rng_ref();
                for (int64_t i = 0; i < x.elements(); ++i) {
                    double m = d(r) ? 1.0 / keep : 0.0;
                    st.mask.data[i] = m;
                    st.out.data[i] = x.data[i] * m;
                }
            }
            break;
        }
        case LayerKind::ReLU: {
            const Tensor& x = out(in_ids[0]);
            st.out = Tensor(x.shape);
            for (int64_t i = 0; i < x.elements(); ++i)
                st.out.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
            break;
        }
        case LayerKind::ELU: {
            const Tensor& x = out(in_ids[0]);
            st.out = Tensor(x.shape);
            for (int64_t i = 0; i < x.elements(); ++i)
                st.out.data[i] =
                    x.data[i] > 0.0 ? x.data[i] : std::expm1(x.data[i]);
            break;
        }
        case LayerKind::MaxPool1D:
        case LayerKind::AvgPool1D: {
            const Tensor& x = out(in_ids[0]);
            if (!is_1d(x)) throw ShapeMismatch("pool over flattened input");
            int64_t n = x.shape[0], l = x.shape[1], c = x.shape[2];
            int64_t k = spec.kernel_size, s = spec.stride;
            int64_t lo_max = ceil_div(l, s);
            int64_t pad = pad_left_for(l, k, s);
            st.out = Tensor({n, lo_max, c});
            bool is_max = spec.kind == LayerKind::MaxPool1D;
            if (is_max) st.argmax.assign(n * lo_max * c, -1);
            for (int64_t i = 0; i < n; ++i)
                for (int64_t lo = 0; lo < lo_max; ++lo)
                    for (int64_t ci = 0; ci < c; ++ci) {
                        double best = 0.0;
                        int64_t best_li = -1;
                        double sum = 0.0;
                        int64_t cnt = 0;
                        for (int64_t j = 0; j < k; ++j) {
                            int64_t li = lo * s + j - pad + spec.offset;
                            if (li < 0 || li >= l) continue;
                            double v = x.at3(i, li, ci);
                            if (best_li < 0 || v > best) {
                                best = v;
                                best_li = li;
                            }
                            sum += v;
                            ++cnt;
                        }
                        int64_t oi = (i * lo_max + lo) * c + ci;
                        if (is_max) {
                            st.out.data[oi] = best_li < 0 ? 0.0 : best;
                            st.argmax[oi] = best_li;
                        } else {
                            st.out.data[oi] =
                                cnt == 0 ? 0.0 : sum / static_cast<double>(cnt);
                            // valid-element count cached for backward
                            if (st.mask.data.empty()) st.mask = Tensor(st.out.shape);
                            st.mask.data[oi] = static_cast<double>(cnt);
                        }
                    }
            break;
        }
        case LayerKind::Add: {
            st.out = out(in_ids[0]);
            for (size_t i = 1; i < in_ids.size(); ++i) {
                const Tensor& x = out(in_ids[i]);
                if (!x.same_shape(st.out))
                    throw ShapeMismatch("Add input shapes differ");
                for (int64_t j = 0; j < x.elements(); ++j)
                    st.out.data[j] += x.data[j];
            }
            break;
        }
        case LayerKind::Concat: {
            const Tensor& first = out(in_ids[0]);
            int64_t c_total = 0;
            for (NodeId src : in_ids) c_total += out(src).shape.back();
            std::vector<int64_t> yshape = first.shape;
            yshape.back() = c_total;
            st.out = Tensor(yshape);
            int64_t m_count = first.elements() / first.shape.back();
            int64_t off = 0;
            for (NodeId src : in_ids) {
                const Tensor& x = out(src);
                int64_t c = x.shape.back();
                for (int64_t i = 0; i < m_count; ++i)
                    for (int64_t ci = 0; ci < c; ++ci)
                        st.out.data[i * c_total + off + ci] =
                            x.data[i * c + ci];
                off += c;
            }
            break;
        }
        case LayerKind::Flatten: {
            const Tensor& x = out(in_ids[0]);
            st.out = x;
            st.out.shape = {x.shape[0], x.elements() / x.shape[0]};
            break;
        }
        case LayerKind::GlobalAvgPool: {
            const Tensor& x = out(in_ids[0]);
            int64_t n = x.shape[0], l = x.shape[1], c = x.shape[2];
            st.out = Tensor({n, c});
            for (int64_t i = 0; i < n; ++i)
                for (int64_t li = 0; li < l; ++li)
                    for (int64_t ci = 0; ci < c; ++ci)
                        st.out.data[i * c + ci] += x.at3(i, li, ci);
            for (double& v : st.out.data) v /= static_cast<double>(l);
            break;
        }
        case LayerKind::Softmax: {
            const Tensor& x = out(in_ids[0]);
            st.out = Tensor(x.shape);
            int64_t c = x.shape.back();
            int64_t m_count = x.elements() / c;
            for (int64_t i = 0; i < m_count; ++i) {
                const double* xr = &x.data[i * c];
                double* yr = &st.out.data[i * c];
                double mx = *std::max_element(xr, xr + c);
                double z = 0.0;
                for (int64_t ci = 0; ci < c; ++ci) {
                    yr[ci] = std::exp(xr[ci] - mx);
                    z += yr[ci];
                }
                for (int64_t ci = 0; ci < c; ++ci) yr[ci] /= z;
            }
            break;
        }
        case LayerKind::Identity: {
            st.out = out(in_ids[0]);
            break;
        }
        }
        states[id] = std::move(st);
    }

    // reverse-mode pass; returns parameter gradients
    ParamMap backward(const Tensor& batch, std::map<NodeId, Tensor>& douts) {
        ParamMap grads;
        for (const auto& [id, tensors] : model.params)
            for (const auto& [name, t] : tensors)
                grads[id][name] = Tensor(t.shape);

        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            NodeId id = *it;
            if (!douts.count(id)) continue;
            const Tensor& dy = douts.at(id);
            const LayerSpec& spec = model.graph.spec_of(id);
            auto in_ids = model.graph.inputs_of(id);
            auto accum = [&](NodeId src, const Tensor& g) {
                auto found = douts.find(src);
                if (found == douts.end()) {
                    douts[src] = g;
                } else {
                    for (int64_t i = 0; i < g.elements(); ++i)
                        found->second.data[i] += g.data[i];
                }
            };
            NodeState& st = states.at(id);
            switch (spec.kind) {
            case LayerKind::Input:
                break;
            case LayerKind::Conv1D: {
                const Tensor& x = out(in_ids[0]);
                Tensor dx(x.shape);
                conv1d_bwd(x, model.params.at(id).at("W"), spec.stride, dy, dx,
                           grads[id]["W"], grads[id]["b"]);
                accum(in_ids[0], dx);
                break;
            }
            case LayerKind::SeparableConv1D: {
                const Tensor& x = out(in_ids[0]);
                auto& p = model.params.at(id);
                Tensor dmid(st.cache.shape);
                matmul_bias_bwd(st.cache, p.at("pw"), dy, dmid, grads[id]["pw"],
                                grads[id]["b"]);
                // depthwise backward
                const Tensor& dw = p.at("dw");
                int64_t n = x.shape[0], l = x.shape[1], c = x.shape[2];
                int64_t k = dw.shape[0];
                int64_t lo_max = dmid.shape[1];
                int64_t pad = pad_left_for(l, k, spec.stride);
                Tensor dx(x.shape);
                Tensor& gdw = grads[id]["dw"];
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t lo = 0; lo < lo_max; ++lo) {
                        const double* gm = &dmid.data[(i * lo_max + lo) * c];
                        for (int64_t j = 0; j < k; ++j) {
                            int64_t li = lo * spec.stride + j - pad;
                            if (li < 0 || li >= l) continue;
                            const double* xr = &x.data[(i * l + li) * c];
                            double* dxr = &dx.data[(i * l + li) * c];
                            const double* wr = &dw.data[j * c];
                            double* gwr = &gdw.data[j * c];
                            for (int64_t ci = 0; ci < c; ++ci) {
                                gwr[ci] += gm[ci] * xr[ci];
                                dxr[ci] += gm[ci] * wr[ci];
                            }
                        }
                    }
                accum(in_ids[0], dx);
                break;
            }
            case LayerKind::Dense: {
                const Tensor& x = out(in_ids[0]);
                Tensor dx(x.shape);
                matmul_bias_bwd(x, model.params.at(id).at("W"), dy, dx,
                                grads[id]["W"], grads[id]["b"]);
                accum(in_ids[0], dx);
                break;
            }
            case LayerKind::BatchNorm: {
                const Tensor& x = out(in_ids[0]);
                auto& p = model.params.at(id);
                const auto& gamma = p.at("gamma");
                int64_t c = x.shape.back();
                int64_t m_count = x.elements() / c;
                double m = static_cast<double>(m_count);
                Tensor dx(x.shape);
                auto& ggamma = grads[id]["gamma"];
                auto& gbeta = grads[id]["beta"];
                if (mode == Mode::Train) {
                    std::vector<double> sum_dxhat(c, 0.0), sum_dxhat_xhat(c, 0.0);
                    for (int64_t i = 0; i < m_count; ++i)
                        for (int64_t ci = 0; ci < c; ++ci) {
                            double g = dy.data[i * c + ci];
                            double xhat = st.cache.data[i * c + ci];
                            ggamma.data[ci] += g * xhat;
                            gbeta.data[ci] += g;
                            double dxhat = g * gamma.data[ci];
                            sum_dxhat[ci] += dxhat;
                            sum_dxhat_xhat[ci] += dxhat * xhat;
                        }
                    for (int64_t i = 0; i < m_count; ++i)
                        for (int64_t ci = 0; ci < c; ++ci) {
                            double dxhat =
                                dy.data[i * c + ci] * gamma.data[ci];
                            double xhat = st.cache.data[i * c + ci];
                            dx.data[i * c + ci] =
                                (dxhat - sum_dxhat[ci] / m -
                                 xhat * sum_dxhat_xhat[ci] / m) /
                                std::sqrt(st.var[ci] + kBnEps);
                        }
                } else {
                    for (int64_t i = 0; i < m_count; ++i)
                        for (int64_t ci = 0; ci < c; ++ci) {
                            double g = dy.data[i * c + ci];
                            ggamma.data[ci] += g * st.cache.data[i * c + ci];
                            gbeta.data[ci] += g;
                            dx.data[i * c + ci] =
                                g * gamma.data[ci] /
                                std::sqrt(st.var[ci] + kBnEps);
                        }
                }
                accum(in_ids[0], dx);
                break;
            }
            case LayerKind::Dropout: {
                if (st.mask.data.empty()) {
                    accum(in_ids[0], dy);
                } else {
                    Tensor dx(dy.shape);
                    for (int64_t i = 0; i < dy.elements(); ++i)
                        dx.data[i] = dy.data[i] * st.mask.data[i];
                    accum(in_ids[0], dx);
                }
                break;
            }
            case LayerKind::ReLU: {
                const Tensor& x = out(in_ids[0]);
                Tensor dx(dy.shape);
                for (int64_t i = 0; i < dy.elements(); ++i)
                    dx.data[i] = x.data[i] > 0.0 ? dy.data[i] : 0.0;
                accum(in_ids[0], dx);
                break;
            }
            case LayerKind::ELU: {
                const Tensor& x = out(in_ids[0]);
                Tensor dx(dy.shape);
                for (int64_t i = 0; i < dy.elements(); ++i)
                    dx.data[i] = dy.data[i] * (x.data[i] > 0.0
                                                   ? 1.0
                                                   : st.out.data[i] + 1.0);
                accum(in_ids[0], dx);
                break;
            }
            case LayerKind::MaxPool1D: {
                const Tensor& x = out(in_ids[0]);
                Tensor dx(x.shape);
                int64_t c = x.shape[2];
                int64_t lo_max = dy.shape[1];
                for (int64_t i = 0; i < x.shape[0]; ++i)
                    for (int64_t lo = 0; lo < lo_max; ++lo)
                        for (int64_t ci = 0; ci < c; ++ci) {
                            int64_t oi = (i * lo_max + lo) * c + ci;
                            int64_t li = st.argmax[oi];
                            if (li >= 0) dx.at3(i, li, ci) += dy.data[oi];
                        }
                accum(in_ids[0], dx);
                break;
            }
            case LayerKind::AvgPool1D: {
                const Tensor& x = out(in_ids[0]);
                Tensor dx(x.shape);
                int64_t l = x.shape[1], c = x.shape[2];
                int64_t lo_max = dy.shape[1];
                int64_t pad = pad_left_for(l, spec.kernel_size, spec.stride);
                for (int64_t i = 0; i < x.shape[0]; ++i)
                    for (int64_t lo = 0; lo < lo_max; ++lo)
                        for (int64_t ci = 0; ci < c; ++ci) {
                            int64_t oi = (i * lo_max + lo) * c + ci;
                            double cnt = st.mask.data[oi];
                            if (cnt <= 0.0) continue;
                            double g = dy.data[oi] / cnt;
                            for (int64_t j = 0; j < spec.kernel_size; ++j) {
                                int64_t li =
                                    lo * spec.stride + j - pad + spec.offset;
                                if (li < 0 || li >= l) continue;
                                dx.at3(i, li, ci) += g;
                            }
                        }
                accum(in_ids[0], dx);
                break;
            }
            case LayerKind::Add: {
                for (NodeId src : in_ids) accum(src, dy);
                break;
            }
            case LayerKind::Concat: {
                int64_t c_total = st.out.shape.back();
                int64_t m_count = st.out.elements() / c_total;
                int64_t off = 0;
                for (NodeId src : in_ids) {
                    const Tensor& x = out(src);
                    int64_t c = x.shape.back();
                    Tensor dx(x.shape);
                    for (int64_t i = 0; i < m_count; ++i)
                        for (int64_t ci = 0; ci < c; ++ci)
                            dx.data[i * c + ci] =
                                dy.data[i * c_total + off + ci];
                    accum(src, dx);
                    off += c;
                }
                break;
            }
            case LayerKind::Flatten: {
                Tensor dx = dy;
                dx.shape = out(in_ids[0]).shape;
                accum(in_ids[0], dx);
                break;
            }
            case LayerKind::GlobalAvgPool: {
                const Tensor& x = out(in_ids[0]);
                int64_t l = x.shape[1], c = x.shape[2];
                Tensor dx(x.shape);
                for (int64_t i = 0; i < x.shape[0]; ++i)
                    for (int64_t li = 0; li < l; ++li)
                        for (int64_t ci = 0; ci < c; ++ci)
                            dx.at3(i, li, ci) =
                                dy.data[i * c + ci] / static_cast<double>(l);
                accum(in_ids[0], dx);
                break;
            }
            case LayerKind::Softmax: {
                const Tensor& p = st.out;
                int64_t c = p.shape.back();
                int64_t m_count = p.elements() / c;
                Tensor dx(p.shape);
                for (int64_t i = 0; i < m_count; ++i) {
                    double dot = 0.0;
                    for (int64_t ci = 0; ci < c; ++ci)
                        dot += dy.data[i * c + ci] * p.data[i * c + ci];
                    for (int64_t ci = 0; ci < c; ++ci)
                        dx.data[i * c + ci] =
                            p.data[i * c + ci] * (dy.data[i * c + ci] - dot);
                }
                accum(in_ids[0], dx);
                break;
            }
            case LayerKind::Identity:
                accum(in_ids[0], dy);
                break;
            }
        }
        return grads;
    }
};

} // namespace

Tensor forward(ModelInstance& model, const Tensor& batch, Mode mode,
               std::mt19937_64* rng) {
    Executor ex(model, mode, rng);
    ex.run(batch);
    return ex.out(ex.softmax_id);
}

std::pair<double, ParamMap> loss_and_grads(ModelInstance& model,
                                           const Tensor& batch,
                                           const std::vector<int64_t>& labels,
                                           Mode mode, std::mt19937_64* rng) {
    Executor ex(model, mode, rng);
    ex.run(batch);
    const Tensor& p = ex.out(ex.softmax_id);
    int64_t c = p.shape.back();
    int64_t n = p.elements() / c;
    if (static_cast<int64_t>(labels.size()) != n)
        throw LengthMismatch("labels length != batch size");
    double loss = 0.0;
    Tensor dp(p.shape);
    for (int64_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || labels[i] >= c)
            throw LabelOutOfRange("label " + std::to_string(labels[i]) +
                                  " not in [0, " + std::to_string(c) + ")");
        double pi = std::max(p.data[i * c + labels[i]], 1e-300);
        loss -= std::log(pi);
        dp.data[i * c + labels[i]] = -1.0 / (pi * static_cast<double>(n));
    }
    loss /= static_cast<double>(n);
    std::map<NodeId, Tensor> douts;
    douts[ex.softmax_id] = std::move(dp);
    return {loss, ex.backward(batch, douts)};
}

void adam_step(ModelInstance& model, const ParamMap& grads, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    model.adam_step += 1;
    double t = static_cast<double>(model.adam_step);
    double corr1 = 1.0 - std::pow(b1, t);
    double corr2 = 1.0 - std::pow(b2, t);
    model.for_each_trainable([&](NodeId id, const std::string& name, Tensor& p) {
        const Tensor& g = grads.at(id).at(name);
        Tensor& m = model.adam_m.at(id).at(name);
        Tensor& v = model.adam_v.at(id).at(name);
        for (int64_t i = 0; i < p.elements(); ++i) {
            m.data[i] = b1 * m.data[i] + (1.0 - b1) * g.data[i];
            v.data[i] = b2 * v.data[i] + (1.0 - b2) * g.data[i] * g.data[i];
            double mhat = m.data[i] / corr1;
            double vhat = v.data[i] / corr2;
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    });
}

double learning_rate_at(const TrainConfig& cfg, int64_t epoch) {
    return cfg.initial_lr *
           std::pow(0.5, static_cast<double>(epoch / cfg.lr_halving_period));
}

namespace {

Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& idx) {
    int64_t row = x.elements() / x.shape[0];
    std::vector<int64_t> shape = x.shape;
    shape[0] = static_cast<int64_t>(idx.size());
    Tensor y(shape);
    for (size_t i = 0; i < idx.size(); ++i)
        std::copy(x.data.begin() + idx[i] * row,
                  x.data.begin() + (idx[i] + 1) * row,
                  y.data.begin() + static_cast<int64_t>(i) * row);
    return y;
}

} // namespace

std::vector<EpochStats> train(ModelInstance& model, const Tensor& x,
                              const std::vector<int64_t>& y,
                              const Tensor& x_val,
                              const std::vector<int64_t>& y_val,
                              const TrainConfig& cfg) {
    if (x.shape.empty() || x.shape[0] == 0)
        throw EmptyDataset("training set is empty");
    int64_t n = x.shape[0];
    std::mt19937_64 rng(cfg.rng_seed);
    std::vector<EpochStats> history;
    std::vector<int64_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int64_t e = 0; e < cfg.epochs; ++e) {
        double lr = learning_rate_at(cfg, model.epoch);
        std::shuffle(perm.begin(), perm.end(), rng);
        double loss_sum = 0.0;
        int64_t batches = 0;
        for (int64_t start = 0; start < n; start += cfg.batch_size) {
            int64_t end = std::min(n, start + cfg.batch_size);
            std::vector<int64_t> idx(perm.begin() + start, perm.begin() + end);
            Tensor xb = gather_rows(x, idx);
            std::vector<int64_t> yb(idx.size());
            for (size_t i = 0; i < idx.size(); ++i) yb[i] = y[idx[i]];
            auto [loss, grads] = loss_and_grads(model, xb, yb, Mode::Train, &rng);
            adam_step(model, grads, lr);
            loss_sum += loss;
            ++batches;
        }
        EpochStats st;
        st.train_loss = loss_sum / static_cast<double>(batches);
        st.learning_rate = lr;
        if (!x_val.shape.empty() && x_val.shape[0] > 0)
            st.val_accuracy = accuracy(model, x_val, y_val);
        history.push_back(st);
        model.epoch += 1;
    }
    return history;
}

std::vector<int64_t> predict(ModelInstance& model, const Tensor& x,
                             int64_t batch_size) {
    int64_t n = x.shape[0];
    std::vector<int64_t> pred(n);
    for (int64_t start = 0; start < n; start += batch_size) {
        int64_t end = std::min(n, start + batch_size);
        std::vector<int64_t> idx(end - start);
        std::iota(idx.begin(), idx.end(), start);
        Tensor xb = gather_rows(x, idx);
        Tensor p = forward(model, xb, Mode::Eval);
        int64_t c = p.shape.back();
        for (int64_t i = 0; i < end - start; ++i) {
            const double* row = &p.data[i * c];
            pred[start + i] = std::max_element(row, row + c) - row;
        }
    }
    return pred;
}

double accuracy(ModelInstance& model, const Tensor& x,
                const std::vector<int64_t>& y) {
    auto pred = predict(model, x);
    int64_t hits = 0;
    for (size_t i = 0; i < y.size(); ++i)
        if (pred[i] == y[i]) ++hits;
    return y.empty() ? 0.0
                     : static_cast<double>(hits) / static_cast<double>(y.size());
}

// ---- checkpoints ------------------------------------------------------------

namespace {

constexpr char kCkptMagic[4] = {'E', 'T', 'C', 'K'};
constexpr uint32_t kCkptVersion = 1;

template <typename T> void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
template <typename T> T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw ParseError("truncated checkpoint");
    return v;
}

void put_str(std::ostream& os, const std::string& s) {
    put<uint64_t>(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string get_str(std::istream& is) {
    auto n = get<uint64_t>(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw ParseError("truncated checkpoint");
    return s;
}

void put_param_map(std::ostream& os, const ParamMap& pm) {
    uint64_t count = 0;
    for (const auto& [id, tensors] : pm) count += tensors.size();
    put<uint64_t>(os, count);
    for (const auto& [id, tensors] : pm)
        for (const auto& [name, t] : tensors) {
            put<int64_t>(os, id);
            put_str(os, name);
            put<uint32_t>(os, static_cast<uint32_t>(t.shape.size()));
            for (int64_t d : t.shape) put<int64_t>(os, d);
            os.write(reinterpret_cast<const char*>(t.data.data()),
                     static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        }
}

ParamMap get_param_map(std::istream& is) {
    ParamMap pm;
    auto count = get<uint64_t>(is);
    for (uint64_t i = 0; i < count; ++i) {
        auto id = get<int64_t>(is);
        std::string name = get_str(is);
        auto rank = get<uint32_t>(is);
        std::vector<int64_t> shape(rank);
        for (auto& d : shape) d = get<int64_t>(is);
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!is) throw ParseError("truncated checkpoint tensor");
        pm[id][name] = std::move(t);
    }
    return pm;
}

} // namespace

void save_checkpoint(const ModelInstance& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open checkpoint for writing: " + path);
    os.write(kCkptMagic, 4);
    put<uint32_t>(os, kCkptVersion);
    put_str(os, serialize(model.graph));
    put<int64_t>(os, model.adam_step);
    put<int64_t>(os, model.epoch);
    put_param_map(os, model.params);
    put_param_map(os, model.adam_m);
    put_param_map(os, model.adam_v);
}

ModelInstance load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kCkptMagic, 4) != 0)
        throw MagicMismatch("not a checkpoint file: " + path);
    auto version = get<uint32_t>(is);
    if (version != kCkptVersion)
        throw SchemaVersionMismatch("unsupported checkpoint version " +
                                    std::to_string(version));
    ModelInstance model;
    model.graph = deserialize(get_str(is));
    model.adam_step = get<int64_t>(is);
    model.epoch = get<int64_t>(is);
    model.params = get_param_map(is);
    model.adam_m = get_param_map(is);
    model.adam_v = get_param_map(is);
    return model;
}

} // namespace etcnas
