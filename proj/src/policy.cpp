#include "etcnas/policy.hpp"

#include <algorithm>
#include <cmath>

namespace etcnas {

namespace {

constexpr int64_t H = RecurrentPolicyCell::kHiddenWidth;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> softmax(const std::vector<double>& z) {
    double mx = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double sum = 0.0;
    for (size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

} // namespace

template <typename F> void RecurrentPolicyCell::for_each_tensor(F&& f) {
    f(embed_);
    f(w_lstm_);
    f(b_lstm_);
    for (auto& t : head_w_) f(t);
    for (auto& t : head_b_) f(t);
}
template <typename F> void RecurrentPolicyCell::for_each_tensor(F&& f) const {
    f(embed_);
    f(w_lstm_);
    f(b_lstm_);
    for (const auto& t : head_w_) f(t);
    for (const auto& t : head_b_) f(t);
}

RecurrentPolicyCell::RecurrentPolicyCell(const SpaceConfig& space,
                                         uint64_t rng_seed) {
    for (int64_t p = 0; p < space.sequence_length(); ++p)
        arities_.push_back(decision_arity(space, p));
    int64_t max_arity = *std::max_element(arities_.begin(), arities_.end());
    vocab_ = max_arity + 1; // +1 start token

    std::mt19937_64 rng(rng_seed);
    auto uniform_fill = [&](Tensor& t, double lim) {
        std::uniform_real_distribution<double> d(-lim, lim);
        for (double& v : t.data) v = d(rng);
    };
    embed_ = Tensor({vocab_, H});
    uniform_fill(embed_, 0.1);
    w_lstm_ = Tensor({2 * H, 4 * H});
    uniform_fill(w_lstm_, std::sqrt(6.0 / (2 * H + 4 * H)));
    b_lstm_ = Tensor({4 * H});
    for (int64_t p = 0; p < sequence_length(); ++p) {
        Tensor w({H, arities_[p]});
        uniform_fill(w, std::sqrt(6.0 / (H + arities_[p])));
        head_w_.push_back(std::move(w));
        head_b_.push_back(Tensor({arities_[p]}));
    }
    int64_t total = 0;
    for_each_tensor([&](const Tensor& t) { total += t.elements(); });
    adam_m_.assign(total, 0.0);
    adam_v_.assign(total, 0.0);
}

RecurrentPolicyCell::State RecurrentPolicyCell::initial_state() const {
    return {std::vector<double>(H, 0.0), std::vector<double>(H, 0.0)};
}

struct RecurrentPolicyCell::Trace {
    // per-step caches for backprop through time
    std::vector<int64_t> prev_choice;
    std::vector<std::vector<double>> x, h_prev, c_prev, gates_post, c, h,
        probs;
    std::vector<int64_t> chosen;
    double log_prob = 0.0;
};

std::pair<std::vector<double>, RecurrentPolicyCell::State>
RecurrentPolicyCell::step(int64_t position, int64_t prev_choice,
                          const State& state) const {
    if (position < 0 || position >= sequence_length())
        throw IndexOutOfRange("policy position out of range");
    std::vector<double> x(H);
    int64_t row = prev_choice + 1; // -1 maps to the start token
    for (int64_t i = 0; i < H; ++i) x[i] = embed_.data[row * H + i];

    std::vector<double> pre(4 * H);
    for (int64_t g = 0; g < 4 * H; ++g) pre[g] = b_lstm_.data[g];
    for (int64_t i = 0; i < H; ++i) {
        double xv = x[i], hv = state.h[i];
        for (int64_t g = 0; g < 4 * H; ++g) {
            pre[g] += xv * w_lstm_.data[i * 4 * H + g];
            pre[g] += hv * w_lstm_.data[(H + i) * 4 * H + g];
        }
    }
    State ns = initial_state();
    for (int64_t i = 0; i < H; ++i) {
        double ig = sigmoid(pre[i]);
        double fg = sigmoid(pre[H + i]);
        double gg = std::tanh(pre[2 * H + i]);
        double og = sigmoid(pre[3 * H + i]);
        ns.c[i] = fg * state.c[i] + ig * gg;
        ns.h[i] = og * std::tanh(ns.c[i]);
    }
    int64_t a = arities_[position];
    std::vector<double> logits(a);
    for (int64_t j = 0; j < a; ++j) {
        double z = head_b_[position].data[j];
        for (int64_t i = 0; i < H; ++i)
            z += ns.h[i] * head_w_[position].data[i * a + j];
        logits[j] = z;
    }
    return {logits, ns};
}

void RecurrentPolicyCell::run(const DecisionSequence& seq, Trace& tr) const {
    State st = initial_state();
    int64_t prev = -1;
    for (int64_t p = 0; p < sequence_length(); ++p) {
        tr.prev_choice.push_back(prev);
        tr.h_prev.push_back(st.h);
        tr.c_prev.push_back(st.c);
        std::vector<double> x(H);
        int64_t row = prev + 1;
        for (int64_t i = 0; i < H; ++i) x[i] = embed_.data[row * H + i];
        tr.x.push_back(x);

        std::vector<double> pre(4 * H);
        for (int64_t g = 0; g < 4 * H; ++g) pre[g] = b_lstm_.data[g];
        for (int64_t i = 0; i < H; ++i) {
            double xv = x[i], hv = st.h[i];
            for (int64_t g = 0; g < 4 * H; ++g) {
                pre[g] += xv * w_lstm_.data[i * 4 * H + g];
                pre[g] += hv * w_lstm_.data[(H + i) * 4 * H + g];
            }
        }
        std::vector<double> post(4 * H);
        State ns = initial_state();
        for (int64_t i = 0; i < H; ++i) {
            post[i] = sigmoid(pre[i]);
            post[H + i] = sigmoid(pre[H + i]);
            post[2 * H + i] = std::tanh(pre[2 * H + i]);
            post[3 * H + i] = sigmoid(pre[3 * H + i]);
            ns.c[i] = post[H + i] * st.c[i] + post[i] * post[2 * H + i];
            ns.h[i] = post[3 * H + i] * std::tanh(ns.c[i]);
        }
        tr.gates_post.push_back(post);
        tr.c.push_back(ns.c);
        tr.h.push_back(ns.h);

        int64_t a = arities_[p];
        std::vector<double> logits(a);
        for (int64_t j = 0; j < a; ++j) {
            double z = head_b_[p].data[j];
            for (int64_t i = 0; i < H; ++i)
                z += ns.h[i] * head_w_[p].data[i * a + j];
            logits[j] = z;
        }
        auto probs = softmax(logits);
        tr.probs.push_back(probs);
        int64_t choice = seq[p];
        tr.chosen.push_back(choice);
        tr.log_prob += std::log(std::max(probs[choice], 1e-300));

        st = ns;
        prev = choice;
    }
}

DecisionSequence RecurrentPolicyCell::sample(std::mt19937_64& rng) const {
    DecisionSequence seq;
    State st = initial_state();
    int64_t prev = -1;
    for (int64_t p = 0; p < sequence_length(); ++p) {
        auto [logits, ns] = step(p, prev, st);
        auto probs = softmax(logits);
        std::discrete_distribution<int64_t> d(probs.begin(), probs.end());
        int64_t choice = d(rng);
        seq.push_back(choice);
        st = ns;
        prev = choice;
    }
    return seq;
}

double RecurrentPolicyCell::log_prob(const DecisionSequence& seq) const {
    Trace tr;
    run(seq, tr);
    return tr.log_prob;
}

std::vector<double> RecurrentPolicyCell::backprop(const Trace& tr) const {
    // gradient buffers matching the flat layout
    Tensor g_embed(embed_.shape), g_w(w_lstm_.shape), g_b(b_lstm_.shape);
    std::vector<Tensor> g_hw, g_hb;
    for (const auto& t : head_w_) g_hw.emplace_back(t.shape);
    for (const auto& t : head_b_) g_hb.emplace_back(t.shape);

    std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0);
    for (int64_t p = sequence_length() - 1; p >= 0; --p) {
        int64_t a = arities_[p];
        // d log p / d logits = onehot(chosen) - probs
        std::vector<double> dlogits(a);
        for (int64_t j = 0; j < a; ++j)
            dlogits[j] = (j == tr.chosen[p] ? 1.0 : 0.0) - tr.probs[p][j];
        std::vector<double> dh = dh_next;
        for (int64_t i = 0; i < H; ++i)
            for (int64_t j = 0; j < a; ++j) {
                g_hw[p].data[i * a + j] += tr.h[p][i] * dlogits[j];
                dh[i] += head_w_[p].data[i * a + j] * dlogits[j];
            }
        for (int64_t j = 0; j < a; ++j) g_hb[p].data[j] += dlogits[j];

        const auto& post = tr.gates_post[p];
        std::vector<double> dpre(4 * H);
        std::vector<double> dc(H);
        for (int64_t i = 0; i < H; ++i) {
            double tc = std::tanh(tr.c[p][i]);
            double dco = dh[i] * post[3 * H + i] * (1.0 - tc * tc) + dc_next[i];
            dc[i] = dco;
            double dog = dh[i] * tc;
            dpre[3 * H + i] = dog * post[3 * H + i] * (1.0 - post[3 * H + i]);
            dpre[i] = dco * post[2 * H + i] * post[i] * (1.0 - post[i]);
            dpre[H + i] =
                dco * tr.c_prev[p][i] * post[H + i] * (1.0 - post[H + i]);
            dpre[2 * H + i] =
                dco * post[i] * (1.0 - post[2 * H + i] * post[2 * H + i]);
        }
        std::vector<double> dx(H, 0.0), dhp(H, 0.0);
        for (int64_t i = 0; i < H; ++i) {
            double xv = tr.x[p][i], hv = tr.h_prev[p][i];
            for (int64_t g = 0; g < 4 * H; ++g) {
                g_w.data[i * 4 * H + g] += xv * dpre[g];
                g_w.data[(H + i) * 4 * H + g] += hv * dpre[g];
                dx[i] += w_lstm_.data[i * 4 * H + g] * dpre[g];
                dhp[i] += w_lstm_.data[(H + i) * 4 * H + g] * dpre[g];
            }
        }
        for (int64_t g = 0; g < 4 * H; ++g) g_b.data[g] += dpre[g];
        int64_t row = tr.prev_choice[p] + 1;
        for (int64_t i = 0; i < H; ++i) g_embed.data[row * H + i] += dx[i];

        dh_next = dhp;
        for (int64_t i = 0; i < H; ++i)
            dc_next[i] = dc[i] * post[H + i]; // through the forget gate

    }

    std::vector<double> flat;
    auto append = [&](const Tensor& t) {
        flat.insert(flat.end(), t.data.begin(), t.data.end());
    };
    append(g_embed);
    append(g_w);
    append(g_b);
    for (const auto& t : g_hw) append(t);
    for (const auto& t : g_hb) append(t);
    return flat;
}

std::vector<double>
RecurrentPolicyCell::log_prob_grad(const DecisionSequence& seq) const {
    Trace tr;
    run(seq, tr);
    return backprop(tr);
}

std::vector<double> RecurrentPolicyCell::flat_params() const {
    std::vector<double> flat;
    for_each_tensor([&](const Tensor& t) {
        flat.insert(flat.end(), t.data.begin(), t.data.end());
    });
    return flat;
}

void RecurrentPolicyCell::set_flat_params(const std::vector<double>& flat) {
    size_t off = 0;
    for_each_tensor([&](Tensor& t) {
        std::copy(flat.begin() + off, flat.begin() + off + t.data.size(),
                  t.data.begin());
        off += t.data.size();
    });
}

void RecurrentPolicyCell::reinforce_update(const DecisionSequence& seq,
                                           double advantage) {
    auto grad = log_prob_grad(seq);
    // ascend advantage * grad log p
    for (double& g : grad) g *= advantage;
    double norm = 0.0;
    for (double g : grad) norm += g * g;
    norm = std::sqrt(norm);
    if (norm > grad_clip_norm && norm > 0.0)
        for (double& g : grad) g *= grad_clip_norm / norm;

    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    adam_step_ += 1;
    double corr1 = 1.0 - std::pow(b1, static_cast<double>(adam_step_));
    double corr2 = 1.0 - std::pow(b2, static_cast<double>(adam_step_));
    auto params = flat_params();
    for (size_t i = 0; i < params.size(); ++i) {
        adam_m_[i] = b1 * adam_m_[i] + (1.0 - b1) * grad[i];
        adam_v_[i] = b2 * adam_v_[i] + (1.0 - b2) * grad[i] * grad[i];
        double mhat = adam_m_[i] / corr1;
        double vhat = adam_v_[i] / corr2;
        params[i] += adam_lr * mhat / (std::sqrt(vhat) + eps);
    }
    set_flat_params(params);
}

} // namespace etcnas
