#include "grnet/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "grnet/parallel.hpp"
#include "grnet/rng.hpp"

namespace grnet {

namespace {

int pool_side(int n) {
    return static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
}

struct StageShape {
    int dim;
    int channels;
};

StageShape shape_after_blocks(const NetworkConfig& config) {
    StageShape s{config.input_dim, 1};
    for (const BlockSpec& b : config.blocks) {
        s.dim = b.d_out;
        s.channels *= b.m;
        if (b.pool == PoolVariant::Across) {
            s.channels /= b.pool_n;
        } else {
            s.dim /= pool_side(b.pool_n);
        }
    }
    return s;
}

}  // namespace

void validate_config(const NetworkConfig& config) {
    auto fail = [](const std::string& why) { throw ConfigInvalid("config: " + why); };
    if (config.input_dim < 1) fail("input_dim must be >= 1");
    if (config.order < 1) fail("order must be >= 1");
    if (config.order > config.input_dim) fail("order exceeds input_dim");
    if (config.classes < 2) fail("need at least 2 classes");
    if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
        fail("learning rate must be positive and finite");
    }
    if (config.batch_size < 1) fail("batch size must be >= 1");
    if (config.epochs < 0) fail("epochs must be >= 0");

    int dim = config.input_dim;
    int channels = 1;
    for (std::size_t i = 0; i < config.blocks.size(); ++i) {
        const BlockSpec& b = config.blocks[i];
        std::string at = "block " + std::to_string(i) + ": ";
        if (b.d_in != dim) fail(at + "d_in " + std::to_string(b.d_in) +
                                " does not match incoming dimension " + std::to_string(dim));
        if (b.d_out >= b.d_in) fail(at + "need d_out < d_in");
        if (b.d_out < config.order) fail(at + "d_out below the subspace order");
        if (b.m < 1) fail(at + "need at least one filter");
        if (b.pool_n < 1) fail(at + "pool size must be >= 1");
        channels *= b.m;
        dim = b.d_out;
        if (b.pool == PoolVariant::Across) {
            if (channels % b.pool_n != 0) {
                fail(at + "channel count " + std::to_string(channels) +
                     " not divisible by pool size " + std::to_string(b.pool_n));
            }
            channels /= b.pool_n;
        } else {
            int side = pool_side(b.pool_n);
            if (side * side != b.pool_n) fail(at + "W-pool size must be a perfect square");
            if (dim % side != 0) {
                fail(at + "d_out " + std::to_string(dim) + " not divisible by sqrt(n)");
            }
            dim /= side;
            if (dim < config.order) fail(at + "pooled dimension fell below the subspace order");
        }
    }
}

int output_dim(const NetworkConfig& config) {
    return shape_after_blocks(config).dim;
}

int output_channels(const NetworkConfig& config) {
    return shape_after_blocks(config).channels;
}

int fc_input_dim(const NetworkConfig& config) {
    StageShape s = shape_after_blocks(config);
    return s.channels * s.dim * s.dim;
}

Model build(const NetworkConfig& config, std::uint64_t seed) {
    validate_config(config);
    Rng rng(seed);

    Model model;
    model.config = config;
    for (const BlockSpec& b : config.blocks) {
        std::vector<FRWeight> filters;
        filters.reserve(static_cast<std::size_t>(b.m));
        for (int j = 0; j < b.m; ++j) {
            Matrix w(b.d_out, b.d_in);
            bool ok = false;
            for (int attempt = 0; attempt < 3 && !ok; ++attempt) {
                for (double& v : w.data()) v = rng.gaussian();
                ok = qr_diag_ratio(transpose(w)) > 1e-12;
            }
            if (!ok) throw RankDeficient("build: could not draw a full-rank filter", 0.0);
            filters.push_back(FRWeight(std::move(w)));
        }
        model.block_weights.push_back(std::move(filters));
    }

    int fan_in = fc_input_dim(config);
    double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    model.fc_weight = Matrix(config.classes, fan_in);
    for (double& v : model.fc_weight.data()) v = scale * rng.gaussian();
    model.fc_bias.assign(static_cast<std::size_t>(config.classes), 0.0);
    return model;
}

namespace {

template <class Fn>
auto tagged(int block, int sample, Fn&& fn) {
    std::string tag = (block >= 0 ? "block " + std::to_string(block) : std::string("output")) +
                      ", sample " + std::to_string(sample) + ": ";
    try {
        return fn();
    } catch (const RankDeficient& e) {
        throw RankDeficient(tag + e.what(), e.diag_ratio);
    } catch (const DegenerateSpectrum& e) {
        throw DegenerateSpectrum(tag + e.what());
    } catch (const SingularR& e) {
        throw SingularR(tag + e.what());
    } catch (const NotSymmetric& e) {
        throw NotSymmetric(tag + e.what());
    } catch (const Error& e) {
        throw Error(tag + e.what());
    }
}

std::vector<double> forward_sample(const Model& model, const OrthonormalBasis& sample,
                                   int sample_idx, SampleTape& tape) {
    Channels chans{sample.basis()};
    tape.blocks.resize(model.block_weights.size());
    for (std::size_t b = 0; b < model.block_weights.size(); ++b) {
        BlockCaches& c = tape.blocks[b];
        const BlockSpec& spec = model.config.blocks[b];
        chans = tagged(static_cast<int>(b), sample_idx, [&] {
            Channels h = frmap_fwd(chans, model.block_weights[b], c.frmap);
            h = reorth_fwd(h, c.reorth);
            h = projmap_fwd(h, c.projmap);
            h = (spec.pool == PoolVariant::Across)
                    ? projpool_a_fwd(h, spec.pool_n, c.pool)
                    : projpool_w_fwd(h, spec.pool_n, c.pool);
            return orthmap_fwd(h, model.config.order, c.orthmap);
        });
    }
    return tagged(-1, sample_idx, [&] {
        Channels h = projmap_fwd(chans, tape.out_projmap);
        return fc_softmax_fwd(h, model.fc_weight, model.fc_bias, tape.fc);
    });
}

}  // namespace

Matrix forward(const Model& model, const std::vector<OrthonormalBasis>& batch,
               Tape& tape, int threads) {
    if (batch.empty()) throw EmptyDataset("forward: batch is empty");
    for (const OrthonormalBasis& s : batch) {
        if (s.dim() != model.config.input_dim || s.order() != model.config.order) {
            throw ShapeMismatch("forward: sample shape does not match the model input");
        }
    }

    tape.samples.assign(batch.size(), SampleTape{});
    tape.n_blocks = static_cast<int>(model.block_weights.size());
    tape.classes = model.config.classes;

    Matrix probs(static_cast<int>(batch.size()), model.config.classes);
    parallel_for(static_cast<int>(batch.size()), threads, [&](int i) {
        std::vector<double> p = forward_sample(model, batch[static_cast<std::size_t>(i)], i,
                                               tape.samples[static_cast<std::size_t>(i)]);
        for (int c = 0; c < model.config.classes; ++c) probs(i, c) = p[static_cast<std::size_t>(c)];
    });
    return probs;
}

namespace {

struct SampleGrads {
    std::vector<std::vector<Matrix>> block_weights;
    Matrix fc_weight;
    std::vector<double> fc_bias;
};

SampleGrads backward_sample(const Model& model, const SampleTape& tape, int label,
                            double scale) {
    SampleGrads out;
    FCGrads fc = fc_softmax_bwd(tape.fc, label, model.fc_weight, scale);
    out.fc_weight = std::move(fc.w_fc);
    out.fc_bias = std::move(fc.bias);

    Channels g = projmap_bwd(tape.out_projmap, fc.input);
    out.block_weights.resize(model.block_weights.size());
    for (int b = static_cast<int>(model.block_weights.size()) - 1; b >= 0; --b) {
        const BlockCaches& c = tape.blocks[static_cast<std::size_t>(b)];
        g = orthmap_bwd(c.orthmap, g);
        g = projpool_bwd(c.pool, g);
        g = projmap_bwd(c.projmap, g);
        g = reorth_bwd(c.reorth, g);
        FRMapGrads fg = frmap_bwd(c.frmap, g);
        out.block_weights[static_cast<std::size_t>(b)] = std::move(fg.weight);
        g = std::move(fg.input);
    }
    return out;
}

}  // namespace

ModelGrads backward(const Model& model, const Tape& tape, const std::vector<int>& labels,
                    double loss_scale, int threads) {
    if (tape.samples.empty() || tape.n_blocks != static_cast<int>(model.block_weights.size()) ||
        tape.classes != model.config.classes) {
        throw CacheMismatch("backward: tape does not match this model");
    }
    if (labels.size() != tape.samples.size()) {
        throw CacheMismatch("backward: label count does not match the taped batch");
    }

    int n = static_cast<int>(tape.samples.size());
    std::vector<SampleGrads> per_sample(static_cast<std::size_t>(n));
    parallel_for(n, threads, [&](int i) {
        per_sample[static_cast<std::size_t>(i)] =
            backward_sample(model, tape.samples[static_cast<std::size_t>(i)],
                            labels[static_cast<std::size_t>(i)], loss_scale);
    });

    // Reduce in sample order so results do not depend on the thread count.
    ModelGrads total;
    total.block_weights.resize(model.block_weights.size());
    for (std::size_t b = 0; b < model.block_weights.size(); ++b) {
        for (const FRWeight& w : model.block_weights[b]) {
            total.block_weights[b].emplace_back(w.d_out(), w.d_in());
        }
    }
    total.fc_weight = Matrix(model.fc_weight.rows(), model.fc_weight.cols());
    total.fc_bias.assign(model.fc_bias.size(), 0.0);

    for (const SampleGrads& g : per_sample) {
        for (std::size_t b = 0; b < total.block_weights.size(); ++b) {
            for (std::size_t j = 0; j < total.block_weights[b].size(); ++j) {
                total.block_weights[b][j] = total.block_weights[b][j] + g.block_weights[b][j];
            }
        }
        total.fc_weight = total.fc_weight + g.fc_weight;
        for (std::size_t c = 0; c < total.fc_bias.size(); ++c) total.fc_bias[c] += g.fc_bias[c];
    }

    double inv = 1.0 / static_cast<double>(n);
    for (auto& block : total.block_weights)
        for (Matrix& w : block) w = inv * w;
    total.fc_weight = inv * total.fc_weight;
    for (double& v : total.fc_bias) v *= inv;
    return total;
}

double loss(const Matrix& probabilities, const std::vector<int>& labels) {
    if (labels.size() != static_cast<std::size_t>(probabilities.rows())) {
        throw ShapeMismatch("loss: label count does not match probability rows");
    }
    double total = 0.0;
    for (int i = 0; i < probabilities.rows(); ++i) {
        int label = labels[static_cast<std::size_t>(i)];
        if (label < 0 || label >= probabilities.cols()) {
            throw BadLabel("loss: label out of range");
        }
        total += -std::log(std::max(probabilities(i, label), 1e-15));
    }
    return total / static_cast<double>(probabilities.rows());
}

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) buf.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

void put_f64(std::string& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int k = 0; k < 8; ++k) buf.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
}

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw TruncatedFile("cannot open file: " + path);
    }

    std::uint32_t u32() {
        unsigned char b[4];
        read(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

    double f64() {
        unsigned char b[8];
        read(b, 8);
        std::uint64_t bits = 0;
        for (int k = 7; k >= 0; --k) bits = (bits << 8) | b[k];
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }

    void magic(const char* expect) {
        char b[4];
        read(b, 4);
        if (std::memcmp(b, expect, 4) != 0) {
            throw BadMagic(std::string("bad magic, expected ") + expect);
        }
    }

private:
    void read(void* dst, std::size_t n) {
        if (!in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n))) {
            throw TruncatedFile("file ended mid-record");
        }
    }

    std::ifstream in_;
};

}  // namespace

void save_model(const Model& model, const std::string& path) {
    const NetworkConfig& c = model.config;
    std::string buf = "GRNM";
    put_u32(buf, 1);
    put_u32(buf, static_cast<std::uint32_t>(c.input_dim));
    put_u32(buf, static_cast<std::uint32_t>(c.order));
    put_u32(buf, static_cast<std::uint32_t>(c.classes));
    put_u32(buf, c.retraction == RetractionMode::StiefelQr ? 1u : 0u);
    put_u32(buf, static_cast<std::uint32_t>(c.blocks.size()));
    for (const BlockSpec& b : c.blocks) {
        put_u32(buf, static_cast<std::uint32_t>(b.d_in));
        put_u32(buf, static_cast<std::uint32_t>(b.d_out));
        put_u32(buf, static_cast<std::uint32_t>(b.m));
        put_u32(buf, b.pool == PoolVariant::Within ? 1u : 0u);
        put_u32(buf, static_cast<std::uint32_t>(b.pool_n));
    }
    for (const auto& filters : model.block_weights)
        for (const FRWeight& w : filters)
            for (double v : w.w().data()) put_f64(buf, v);
    for (double v : model.fc_weight.data()) put_f64(buf, v);
    for (double v : model.fc_bias) put_f64(buf, v);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !out.write(buf.data(), static_cast<std::streamsize>(buf.size()))) {
        throw Error("save_model: cannot write " + path);
    }
}

Model load_model(const std::string& path) {
    Reader in(path);
    in.magic("GRNM");
    std::uint32_t version = in.u32();
    if (version != 1) throw BadVersion("unsupported GRNM version " + std::to_string(version));

    NetworkConfig config;
    config.input_dim = static_cast<int>(in.u32());
    config.order = static_cast<int>(in.u32());
    config.classes = static_cast<int>(in.u32());
    config.retraction = in.u32() == 1u ? RetractionMode::StiefelQr : RetractionMode::PsdIdentity;
    std::uint32_t n_blocks = in.u32();
    for (std::uint32_t b = 0; b < n_blocks; ++b) {
        BlockSpec spec;
        spec.d_in = static_cast<int>(in.u32());
        spec.d_out = static_cast<int>(in.u32());
        spec.m = static_cast<int>(in.u32());
        spec.pool = in.u32() == 1u ? PoolVariant::Within : PoolVariant::Across;
        spec.pool_n = static_cast<int>(in.u32());
        config.blocks.push_back(spec);
    }
    try {
        validate_config(config);
    } catch (const ConfigInvalid& e) {
        throw InvariantViolation(std::string("load_model: ") + e.what());
    }

    Model model;
    model.config = config;
    for (const BlockSpec& b : config.blocks) {
        std::vector<FRWeight> filters;
        for (int j = 0; j < b.m; ++j) {
            Matrix w(b.d_out, b.d_in);
            for (double& v : w.data()) v = in.f64();
            filters.push_back(FRWeight(std::move(w)));
        }
        model.block_weights.push_back(std::move(filters));
    }
    model.fc_weight = Matrix(config.classes, fc_input_dim(config));
    for (double& v : model.fc_weight.data()) v = in.f64();
    model.fc_bias.resize(static_cast<std::size_t>(config.classes));
    for (double& v : model.fc_bias) v = in.f64();
    return model;
}

}  // namespace grnet
