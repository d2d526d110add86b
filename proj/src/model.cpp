#include "oocd/model.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "oocd/errors.hpp"

namespace oocd {

namespace fs = std::filesystem;
using nn::Mat;
using nn::NodePtr;
using nn::Parameter;
using nlohmann::json;

void TinyLmConfig::validate() const {
    if (text_vocab_size < 2 || visual_vocab_size < 1) throw ConfigError("vocab sizes too small");
    if (d_model < 1 || n_layers < 1 || n_heads < 1 || max_context < 2) {
        throw ConfigError("invalid model dimensions");
    }
    if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
}

LoraTarget lora_target_from_string(const std::string& name) {
    if (name == "attn_q") return LoraTarget::AttnQ;
    if (name == "attn_k") return LoraTarget::AttnK;
    if (name == "attn_v") return LoraTarget::AttnV;
    if (name == "attn_o") return LoraTarget::AttnO;
    if (name == "mlp_in") return LoraTarget::MlpIn;
    if (name == "mlp_out") return LoraTarget::MlpOut;
    throw ConfigError("unknown lora target: " + name);
}

std::string to_string(LoraTarget t) {
    switch (t) {
        case LoraTarget::AttnQ: return "attn_q";
        case LoraTarget::AttnK: return "attn_k";
        case LoraTarget::AttnV: return "attn_v";
        case LoraTarget::AttnO: return "attn_o";
        case LoraTarget::MlpIn: return "mlp_in";
        case LoraTarget::MlpOut: return "mlp_out";
    }
    throw ConfigError("unknown lora target");
}

namespace {

Parameter* find_in(std::vector<Parameter>& params, const std::string& name) {
    for (auto& p : params) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

// (rows=out, cols=in) of the projection a target wraps
std::pair<int, int> target_shape(const TinyLmConfig& c, LoraTarget t) {
    switch (t) {
        case LoraTarget::MlpIn: return {c.ffn_dim(), c.d_model};
        case LoraTarget::MlpOut: return {c.d_model, c.ffn_dim()};
        default: return {c.d_model, c.d_model};
    }
}

}  // namespace

void LoraAdapterSet::set_trainable(bool t) {
    for (auto& p : params) p.trainable = t;
}
Parameter* LoraAdapterSet::find(const std::string& name) { return find_in(params, name); }
const Parameter* LoraAdapterSet::find(const std::string& name) const {
    return find_in(const_cast<std::vector<Parameter>&>(params), name);
}
Parameter* TinyLm::find(const std::string& name) { return find_in(params, name); }
const Parameter* TinyLm::find(const std::string& name) const {
    return find_in(const_cast<std::vector<Parameter>&>(params), name);
}

TinyLm TinyLm::init(const TinyLmConfig& config) {
    config.validate();
    TinyLm m;
    m.config = config;
    std::mt19937_64 gen(config.seed ^ 0x74696e792d6c6dULL);
    std::normal_distribution<double> dist(0.0, 0.08);
    auto randn = [&](int r, int c) {
        Mat w(r, c);
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) w(i, j) = dist(gen);
        }
        return w;
    };
    auto add = [&](const std::string& name, Mat v) {
        m.params.push_back(Parameter{name, std::move(v), {}, false});
    };
    const int d = config.d_model, f = config.ffn_dim();
    add("text_emb", randn(config.text_vocab_size, d));
    add("vis_emb", randn(config.visual_vocab_size, d));
    add("pos_emb", randn(config.max_context, d));
    for (int i = 0; i < config.n_layers; ++i) {
        const std::string L = "layer" + std::to_string(i) + ".";
        add(L + "ln1.gain", Mat::Ones(1, d));
        add(L + "ln1.bias", Mat::Zero(1, d));
        add(L + "attn_q.W", randn(d, d));
        add(L + "attn_k.W", randn(d, d));
        add(L + "attn_v.W", randn(d, d));
        add(L + "attn_o.W", randn(d, d));
        add(L + "ln2.gain", Mat::Ones(1, d));
        add(L + "ln2.bias", Mat::Zero(1, d));
        add(L + "mlp_in.W", randn(f, d));
        add(L + "mlp_in.b", Mat::Zero(1, f));
        add(L + "mlp_out.W", randn(d, f));
        add(L + "mlp_out.b", Mat::Zero(1, d));
    }
    add("ln_f.gain", Mat::Ones(1, d));
    add("ln_f.bias", Mat::Zero(1, d));
    // The head stays frozen, so its rows must reach useful logit magnitudes
    // on their own: ln_f bounds |x| by sqrt(d), giving max logits near
    // 2*sqrt(d)*|scale| — std 2/sqrt(d) keeps the cross-entropy floor low.
    Mat head = randn(config.text_vocab_size, d) * (2.0 / (0.08 * std::sqrt(d)));
    add("head.W", std::move(head));
    return m;
}

LoraAdapterSet init_adapter(const TinyLmConfig& model_config, const LoraConfig& config,
                            std::uint64_t seed) {
    if (config.rank < 1 || config.lora_alpha <= 0.0) throw ConfigError("invalid lora config");
    if (config.targets.empty()) throw ConfigError("lora adapter needs at least one target");
    LoraAdapterSet a;
    a.config = config;
    std::mt19937_64 gen(seed ^ 0x6c6f72612d696eULL);
    std::normal_distribution<double> dist(0.0, 0.02);
    for (int i = 0; i < model_config.n_layers; ++i) {
        for (LoraTarget t : config.targets) {
            auto [out, in] = target_shape(model_config, t);
            const std::string base =
                "layer" + std::to_string(i) + "." + to_string(t) + ".";
            Mat A(config.rank, in);
            for (int r = 0; r < config.rank; ++r) {
                for (int c = 0; c < in; ++c) A(r, c) = dist(gen);
            }
            a.params.push_back(Parameter{base + "A", std::move(A), {}, false});
            a.params.push_back(Parameter{base + "B", Mat::Zero(out, config.rank), {}, false});
        }
    }
    return a;
}

namespace {

struct Builder {
    nn::Graph& g;
    AdapterStack& stack;

    NodePtr base(const std::string& name) {
        Parameter* p = stack.base.find(name);
        if (!p) throw CheckpointError("missing base tensor " + name);
        return g.param(*p);
    }

    // Effective projection weight with every active adapter delta applied.
    NodePtr effective(int layer, LoraTarget target) {
        const std::string name = "layer" + std::to_string(layer) + "." + to_string(target);
        NodePtr w = base(name + ".W");
        for (LoraAdapterSet* a : {stack.stage1 ? &*stack.stage1 : nullptr,
                                  stack.stage2 ? &*stack.stage2 : nullptr}) {
            if (!a || !a->active) continue;
            Parameter* A = a->find(name + ".A");
            Parameter* B = a->find(name + ".B");
            if (!A || !B) continue;  // target not wrapped by this adapter
            w = g.add(w, g.scale(g.matmul(g.param(*B), g.param(*A)), a->config.scaling()));
        }
        return w;
    }

    NodePtr project(NodePtr x, int layer, LoraTarget target) {
        return g.matmul(x, g.transpose(effective(layer, target)));
    }
};

}  // namespace

ForwardPass build_forward(AdapterStack& stack, const std::vector<int>& image_tokens,
                          const std::vector<int>& text_tokens, int logit_row0,
                          int logit_rows) {
    const TinyLmConfig& cfg = stack.base.config;
    if (text_tokens.empty()) throw ConfigError("forward requires at least one text token");
    const int prefix = static_cast<int>(image_tokens.size());
    const int total = prefix + static_cast<int>(text_tokens.size());
    if (total > cfg.max_context) {
        throw ConfigError("sequence length " + std::to_string(total) + " exceeds max_context " +
                          std::to_string(cfg.max_context));
    }
    for (int t : text_tokens) {
        if (t < 0 || t >= cfg.text_vocab_size) throw ConfigError("text token out of range");
    }
    for (int t : image_tokens) {
        if (t < 0 || t >= cfg.visual_vocab_size) throw ConfigError("visual token out of range");
    }

    ForwardPass fp;
    fp.graph = std::make_shared<nn::Graph>();
    fp.total_len = total;
    fp.prefix_len = prefix;
    nn::Graph& g = *fp.graph;
    Builder b{g, stack};

    std::vector<NodePtr> embeds;
    if (prefix > 0) embeds.push_back(g.gather_rows(b.base("vis_emb"), image_tokens));
    embeds.push_back(g.gather_rows(b.base("text_emb"), text_tokens));
    NodePtr x = embeds.size() == 1 ? embeds[0] : g.concat_rows(embeds);

    std::vector<int> positions(static_cast<size_t>(total));
    std::iota(positions.begin(), positions.end(), 0);
    x = g.add(x, g.gather_rows(b.base("pos_emb"), positions));

    Mat mask = Mat::Zero(total, total);
    for (int r = 0; r < total; ++r) {
        for (int c = r + 1; c < total; ++c) mask(r, c) = -1e30;
    }
    const int hd = cfg.head_dim();
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

    for (int i = 0; i < cfg.n_layers; ++i) {
        const std::string L = "layer" + std::to_string(i) + ".";
        NodePtr h = g.layer_norm(x, b.base(L + "ln1.gain"), b.base(L + "ln1.bias"));
        NodePtr q = b.project(h, i, LoraTarget::AttnQ);
        NodePtr k = b.project(h, i, LoraTarget::AttnK);
        NodePtr v = b.project(h, i, LoraTarget::AttnV);
        std::vector<NodePtr> heads;
        for (int hidx = 0; hidx < cfg.n_heads; ++hidx) {
            NodePtr qh = g.slice_cols(q, hidx * hd, hd);
            NodePtr kh = g.slice_cols(k, hidx * hd, hd);
            NodePtr vh = g.slice_cols(v, hidx * hd, hd);
            NodePtr scores = g.scale(g.matmul(qh, g.transpose(kh)), inv_sqrt_hd);
            NodePtr att = g.softmax_rows(g.add_const(scores, mask));
            heads.push_back(g.matmul(att, vh));
        }
        NodePtr attn_out = b.project(g.concat_cols(heads), i, LoraTarget::AttnO);
        x = g.add(x, attn_out);

        NodePtr h2 = g.layer_norm(x, b.base(L + "ln2.gain"), b.base(L + "ln2.bias"));
        NodePtr ff = g.gelu(g.add_rowvec(b.project(h2, i, LoraTarget::MlpIn),
                                         b.base(L + "mlp_in.b")));
        NodePtr out = g.add_rowvec(b.project(ff, i, LoraTarget::MlpOut),
                                   b.base(L + "mlp_out.b"));
        x = g.add(x, out);
    }
    x = g.layer_norm(x, b.base("ln_f.gain"), b.base("ln_f.bias"));

    if (logit_row0 >= 0) {
        x = g.slice_rows(x, logit_row0, logit_rows);
    }
    fp.logits = g.matmul(x, g.transpose(b.base("head.W")));
    return fp;
}

Mat forward_logits(AdapterStack& stack, const std::vector<int>& image_tokens,
                   const std::vector<int>& text_tokens) {
    const int prefix = static_cast<int>(image_tokens.size());
    const int total = prefix + static_cast<int>(text_tokens.size());
    const int row0 = std::max(prefix - 1, 0);
    ForwardPass fp = build_forward(stack, image_tokens, text_tokens, row0, total - 1 - row0 + 1);
    return fp.logits->value;
}

namespace {

// Autodiff-free incremental decoder: effective weights are materialized once
// and per-layer keys/values cached, so each generated token costs one row of
// compute instead of a whole-sequence graph rebuild.
class IncrementalDecoder {
public:
    explicit IncrementalDecoder(AdapterStack& stack) : cfg_(stack.base.config) {
        auto base = [&](const std::string& name) -> const Mat& {
            const Parameter* p = stack.base.find(name);
            if (!p) throw CheckpointError("missing base tensor " + name);
            return p->value;
        };
        auto effective = [&](int layer, LoraTarget t) {
            const std::string name = "layer" + std::to_string(layer) + "." + to_string(t);
            Mat w = base(name + ".W");
            for (LoraAdapterSet* a : {stack.stage1 ? &*stack.stage1 : nullptr,
                                      stack.stage2 ? &*stack.stage2 : nullptr}) {
                if (!a || !a->active) continue;
                const Parameter* A = a->find(name + ".A");
                const Parameter* B = a->find(name + ".B");
                if (!A || !B) continue;
                w += a->config.scaling() * (B->value * A->value);
            }
            return w;
        };
        text_emb_ = &base("text_emb");
        vis_emb_ = &base("vis_emb");
        pos_emb_ = &base("pos_emb");
        head_ = &base("head.W");
        lnf_g_ = base("ln_f.gain").row(0);
        lnf_b_ = base("ln_f.bias").row(0);
        layers_.resize(cfg_.n_layers);
        for (int i = 0; i < cfg_.n_layers; ++i) {
            const std::string L = "layer" + std::to_string(i) + ".";
            Layer& ly = layers_[i];
            ly.wq = effective(i, LoraTarget::AttnQ);
            ly.wk = effective(i, LoraTarget::AttnK);
            ly.wv = effective(i, LoraTarget::AttnV);
            ly.wo = effective(i, LoraTarget::AttnO);
            ly.win = effective(i, LoraTarget::MlpIn);
            ly.wout = effective(i, LoraTarget::MlpOut);
            ly.ln1_g = base(L + "ln1.gain").row(0);
            ly.ln1_b = base(L + "ln1.bias").row(0);
            ly.ln2_g = base(L + "ln2.gain").row(0);
            ly.ln2_b = base(L + "ln2.bias").row(0);
            ly.b_in = base(L + "mlp_in.b").row(0);
            ly.b_out = base(L + "mlp_out.b").row(0);
            ly.k_cache.resize(0, cfg_.d_model);
            ly.v_cache.resize(0, cfg_.d_model);
        }
    }

    // Feeds one token (its embedding row) and returns the residual-stream row.
    Eigen::RowVectorXd step(const Eigen::RowVectorXd& emb) {
        const int hd = cfg_.head_dim();
        const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
        Eigen::RowVectorXd x = emb;
        for (Layer& ly : layers_) {
            const Eigen::RowVectorXd h = layer_norm_row(x, ly.ln1_g, ly.ln1_b);
            const Eigen::RowVectorXd q = h * ly.wq.transpose();
            const Eigen::Index t = ly.k_cache.rows();
            ly.k_cache.conservativeResize(t + 1, Eigen::NoChange);
            ly.v_cache.conservativeResize(t + 1, Eigen::NoChange);
            ly.k_cache.row(t) = h * ly.wk.transpose();
            ly.v_cache.row(t) = h * ly.wv.transpose();

            Eigen::RowVectorXd attn(cfg_.d_model);
            for (int hidx = 0; hidx < cfg_.n_heads; ++hidx) {
                const auto qh = q.segment(hidx * hd, hd);
                const auto kh = ly.k_cache.middleCols(hidx * hd, hd);
                const auto vh = ly.v_cache.middleCols(hidx * hd, hd);
                Eigen::VectorXd scores = (kh * qh.transpose()) * inv_sqrt_hd;
                Eigen::ArrayXd e = (scores.array() - scores.maxCoeff()).exp();
                const Eigen::VectorXd att = e / e.sum();
                attn.segment(hidx * hd, hd) = att.transpose() * vh;
            }
            x += attn * ly.wo.transpose();

            const Eigen::RowVectorXd h2 = layer_norm_row(x, ly.ln2_g, ly.ln2_b);
            Eigen::RowVectorXd ff = h2 * ly.win.transpose() + ly.b_in;
            ff = ff.unaryExpr([](double v) {
                return v * 0.5 * (1.0 + std::erf(v / std::sqrt(2.0)));
            });
            x += ff * ly.wout.transpose() + ly.b_out;
        }
        return x;
    }

    int feed_and_argmax(const std::vector<int>& image_tokens, const std::vector<int>& text,
                        int from) {
        Eigen::RowVectorXd x;
        const int prefix = static_cast<int>(image_tokens.size());
        for (int pos = from; pos < prefix + static_cast<int>(text.size()); ++pos) {
            Eigen::RowVectorXd emb =
                pos < prefix ? vis_emb_->row(image_tokens[pos])
                             : Eigen::RowVectorXd(text_emb_->row(text[pos - prefix]));
            emb += pos_emb_->row(pos);
            x = step(emb);
        }
        const Eigen::RowVectorXd logits = layer_norm_row(x, lnf_g_, lnf_b_) * head_->transpose();
        Eigen::Index best;
        logits.maxCoeff(&best);
        return static_cast<int>(best);
    }

private:
    struct Layer {
        Mat wq, wk, wv, wo, win, wout;
        Eigen::RowVectorXd ln1_g, ln1_b, ln2_g, ln2_b, b_in, b_out;
        Mat k_cache, v_cache;
    };

    static Eigen::RowVectorXd layer_norm_row(const Eigen::RowVectorXd& x,
                                             const Eigen::RowVectorXd& gain,
                                             const Eigen::RowVectorXd& bias,
                                             double eps = 1e-5) {
        const double mu = x.mean();
        const double var = (x.array() - mu).square().mean();
        const double inv_sigma = 1.0 / std::sqrt(var + eps);
        return (((x.array() - mu) * inv_sigma) * gain.array() + bias.array()).matrix();
    }

    const TinyLmConfig& cfg_;
    const Mat *text_emb_, *vis_emb_, *pos_emb_, *head_;
    Eigen::RowVectorXd lnf_g_, lnf_b_;
    std::vector<Layer> layers_;
};

}  // namespace

DecodeResult greedy_decode(AdapterStack& stack, const std::vector<int>& image_tokens,
                           const std::vector<int>& prompt_tokens, int max_new) {
    const TinyLmConfig& cfg = stack.base.config;
    DecodeResult res;
    if (prompt_tokens.empty()) throw ConfigError("forward requires at least one text token");
    for (int t : prompt_tokens) {
        if (t < 0 || t >= cfg.text_vocab_size) throw ConfigError("text token out of range");
    }
    for (int t : image_tokens) {
        if (t < 0 || t >= cfg.visual_vocab_size) throw ConfigError("visual token out of range");
    }
    IncrementalDecoder dec(stack);
    std::vector<int> text = prompt_tokens;
    int fed = 0;
    for (int step = 0; step < max_new; ++step) {
        const int total = static_cast<int>(image_tokens.size() + text.size());
        if (total >= cfg.max_context) {
            res.truncated = true;
            break;
        }
        const int tok = dec.feed_and_argmax(image_tokens, text, fed);
        fed = total;
        res.tokens.push_back(tok);
        text.push_back(tok);
        if (tok == 0) break;  // eos
    }
    return res;
}

// ---- checkpoints ----

namespace {

void write_tensor(const fs::path& path, const Mat& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    // Eigen default storage is column-major; serialize row-major for clarity.
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            double v = m(r, c);
            out.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
    }
}

Mat read_tensor(const fs::path& path, int rows, int cols) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("missing tensor file " + path.string());
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            double v;
            in.read(reinterpret_cast<char*>(&v), sizeof(v));
            if (!in) throw CheckpointError("truncated tensor file " + path.string());
            m(r, c) = v;
        }
    }
    return m;
}

json tensors_manifest(const std::vector<Parameter>& params) {
    json arr = json::array();
    for (const auto& p : params) {
        arr.push_back({{"name", p.name},
                       {"rows", p.value.rows()},
                       {"cols", p.value.cols()}});
    }
    return arr;
}

void write_params(const fs::path& dir, const std::vector<Parameter>& params) {
    fs::create_directories(dir);
    for (const auto& p : params) write_tensor(dir / (p.name + ".bin"), p.value);
}

void read_params(const fs::path& dir, const json& manifest, std::vector<Parameter>& params) {
    params.clear();
    for (const auto& t : manifest) {
        Parameter p;
        p.name = t.at("name").get<std::string>();
        p.value = read_tensor(dir / (p.name + ".bin"), t.at("rows").get<int>(),
                              t.at("cols").get<int>());
        params.push_back(std::move(p));
    }
}

json adapter_manifest(const LoraAdapterSet& a) {
    json targets = json::array();
    for (auto t : a.config.targets) targets.push_back(to_string(t));
    return {{"rank", a.config.rank},
            {"lora_alpha", a.config.lora_alpha},
            {"targets", targets},
            {"active", a.active},
            {"tensors", tensors_manifest(a.params)}};
}

LoraAdapterSet adapter_from_manifest(const fs::path& dir, const json& j) {
    LoraAdapterSet a;
    a.config.rank = j.at("rank").get<int>();
    a.config.lora_alpha = j.at("lora_alpha").get<double>();
    a.config.targets.clear();
    for (const auto& t : j.at("targets")) {
        a.config.targets.push_back(lora_target_from_string(t.get<std::string>()));
    }
    a.active = j.at("active").get<bool>();
    read_params(dir, j.at("tensors"), a.params);
    return a;
}

}  // namespace

void save_checkpoint(const AdapterStack& stack, const std::string& dir) {
    const fs::path target(dir);
    const fs::path tmp(dir + ".tmp");
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    const TinyLmConfig& c = stack.base.config;
    json manifest{{"format_version", 1},
                  {"config",
                   {{"text_vocab_size", c.text_vocab_size},
                    {"visual_vocab_size", c.visual_vocab_size},
                    {"d_model", c.d_model},
                    {"n_layers", c.n_layers},
                    {"n_heads", c.n_heads},
                    {"max_context", c.max_context},
                    {"seed", c.seed}}},
                  {"base", tensors_manifest(stack.base.params)}};
    write_params(tmp / "base", stack.base.params);
    if (stack.stage1) {
        manifest["stage1"] = adapter_manifest(*stack.stage1);
        write_params(tmp / "stage1", stack.stage1->params);
    }
    if (stack.stage2) {
        manifest["stage2"] = adapter_manifest(*stack.stage2);
        write_params(tmp / "stage2", stack.stage2->params);
    }
    std::ofstream mf(tmp / "manifest.json");
    mf << manifest.dump(2) << '\n';
    mf.close();

    fs::remove_all(target);
    fs::rename(tmp, target);
}

AdapterStack load_checkpoint(const std::string& dir) {
    const fs::path root(dir);
    std::ifstream mf(root / "manifest.json");
    if (!mf) throw CheckpointError("missing manifest in " + dir);
    json manifest = json::parse(mf, nullptr, false);
    if (manifest.is_discarded()) throw CheckpointError("malformed manifest in " + dir);

    AdapterStack stack;
    const json& c = manifest.at("config");
    stack.base.config.text_vocab_size = c.at("text_vocab_size").get<int>();
    stack.base.config.visual_vocab_size = c.at("visual_vocab_size").get<int>();
    stack.base.config.d_model = c.at("d_model").get<int>();
    stack.base.config.n_layers = c.at("n_layers").get<int>();
    stack.base.config.n_heads = c.at("n_heads").get<int>();
    stack.base.config.max_context = c.at("max_context").get<int>();
    stack.base.config.seed = c.at("seed").get<std::uint64_t>();
    read_params(root / "base", manifest.at("base"), stack.base.params);
    if (manifest.contains("stage1")) {
        stack.stage1 = adapter_from_manifest(root / "stage1", manifest["stage1"]);
    }
    if (manifest.contains("stage2")) {
        stack.stage2 = adapter_from_manifest(root / "stage2", manifest["stage2"]);
    }
    return stack;
}

void load_adapter_into(AdapterStack& stack, const std::string& dir, int stage) {
    AdapterStack other = load_checkpoint(dir);
    const std::optional<LoraAdapterSet>& src = stage == 1 ? other.stage1 : other.stage2;
    if (!src) {
        throw CheckpointError("checkpoint " + dir + " has no stage" + std::to_string(stage) +
                              " adapter");
    }
    // Shape check against the destination base.
    for (const auto& p : src->params) {
        const bool is_a = p.name.ends_with(".A");
        const std::string proj = p.name.substr(0, p.name.size() - 2);
        const size_t dot = proj.rfind('.');
        LoraTarget t = lora_target_from_string(proj.substr(dot + 1));
        auto [out, in] = target_shape(stack.base.config, t);
        const Eigen::Index want_rows = is_a ? src->config.rank : out;
        const Eigen::Index want_cols = is_a ? in : src->config.rank;
        if (p.value.rows() != want_rows || p.value.cols() != want_cols) {
            throw CheckpointError("adapter tensor " + p.name + " has shape " +
                                  std::to_string(p.value.rows()) + "x" +
                                  std::to_string(p.value.cols()) + ", expected " +
                                  std::to_string(want_rows) + "x" + std::to_string(want_cols));
        }
    }
    (stage == 1 ? stack.stage1 : stack.stage2) = *src;
}

std::uint64_t params_hash(const std::vector<Parameter>& params) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](const void* data, size_t len) {
        const unsigned char* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& p : params) {
        mix(p.name.data(), p.name.size());
        for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
            for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
                double v = p.value(r, c);
                mix(&v, sizeof(v));
            }
        }
    }
    return h;
}

}  // namespace oocd
