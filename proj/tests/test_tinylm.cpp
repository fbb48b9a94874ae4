#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "gradlab/error.hpp"
#include "gradlab/io.hpp"
#include "gradlab/rng.hpp"
#include "gradlab/tinylm.hpp"
#include "oracles/finite_difference.hpp"
#include "oracles/reference.hpp"
#include "support/random_model.hpp"
#include "support/temp_dir.hpp"

using namespace gradlab;

TEST_CASE("SplitMix64 matches the reference stream") {
    // Golden values recorded once from the reference C implementation, seed 0.
    SplitMix64 rng(0);
    CHECK(rng.next() == 0xe220a8397b1dcdafULL);
    CHECK(rng.next() == 0x6e789e6aa1b965f4ULL);
    CHECK(rng.next() == 0x06c45d188009454fULL);

    for (std::uint64_t seed : {1ULL, 42ULL, 0xdeadbeefULL}) {
        SplitMix64 a(seed);
        oracle::RefSplitMix b{seed};
        for (int i = 0; i < 100; ++i) {
            CHECK(a.next() == b.next());
        }
    }
    CHECK(derive_seed(5, 1) != derive_seed(5, 2));
    CHECK(derive_seed(5, 1) == derive_seed(5, 1));
}

TEST_CASE("build_vocab") {
    const auto v = build_vocab(std::vector<Sentence>{{"he", "runs"}});
    REQUIRE(v.size() == 6);
    CHECK(v.words() == std::vector<std::string>{"[MASK]", "[PAD]", "[BOS]", "[UNK]", "he", "runs"});
    CHECK(*v.find("runs") == 5);
    CHECK(v.id_or_unk("zebra") == Vocabulary::kUnk);

    CHECK(build_vocab(std::vector<Sentence>{{"a"}, {"a"}}).size() == 5);
    CHECK_THROWS_AS(build_vocab(std::vector<Sentence>{}), DataError);

    const auto corpus = generate_corpus(default_pronoun_grammar(), 100);
    std::set<std::string> distinct;
    for (const auto& s : corpus) {
        distinct.insert(s.begin(), s.end());
    }
    CHECK(build_vocab(corpus).size() == 4 + distinct.size());
}

TEST_CASE("init_params") {
    const auto vocab = build_vocab(std::vector<Sentence>{{"he", "runs"}});
    const auto p = init_params(ModelConfig{}, vocab);
    CHECK_NOTHROW(p.validate());
    for (double v : p[TensorId::b1].data) {
        CHECK(v == 0.0);
    }
    for (double v : p[TensorId::b2].data) {
        CHECK(v == 0.0);
    }
    CHECK(p.bit_equal(init_params(ModelConfig{}, vocab)));

    // Golden trace: s * (2u - 1) with u from the reference PRNG, seed 42, s = sqrt(6/22).
    const auto& e = p[TensorId::E].data;
    CHECK(e[0] == 0.25230628714692793);
    CHECK(e[1] == -0.3552120097372797);
    CHECK(e[2] == -0.23124357765855796);
    CHECK(e[3] == -0.16273748906221214);

    const double s = std::sqrt(6.0 / (80.0 + 32.0));
    for (double v : p[TensorId::W1].data) {
        CHECK(std::abs(v) <= s);
    }
}

TEST_CASE("context windows") {
    const std::vector<TokenId> ids{10, 11, 12, 13};
    CHECK(mlm_context(ids, 0, 2) == std::vector<TokenId>{1, 1, 0, 11, 12});
    CHECK(mlm_context(ids, 2, 2) == std::vector<TokenId>{10, 11, 0, 13, 1});
    CHECK(clm_context(ids, 0, 2) == std::vector<TokenId>{2, 2});
    CHECK(clm_context(ids, 3, 2) == std::vector<TokenId>{11, 12});
    CHECK(clm_context(ids, 1, 2) == std::vector<TokenId>{2, 10});
}

TEST_CASE("forward_probs") {
    const auto vocab = support::small_vocab(20);
    oracle::RefSplitMix rng{9};

    SUBCASE("normalization and dual implementation") {
        for (auto objective : {Objective::MLM, Objective::CLM}) {
            ModelConfig cfg;
            cfg.objective = objective;
            for (std::uint64_t seed = 0; seed < 20; ++seed) {
                const auto p = support::random_model(cfg, vocab, seed);
                const auto ctx = support::random_context(p, rng);
                const auto probs = forward_probs(p, ctx);
                double total = 0.0;
                for (double q : probs) {
                    total += q;
                }
                CHECK(std::abs(total - 1.0) <= 1e-12);
                const auto ref = oracle::RefModel::from(p).probs(ctx);
                for (std::size_t k = 0; k < probs.size(); ++k) {
                    CHECK(std::abs(probs[k] - static_cast<double>(ref[k])) <= 1e-12);
                }
            }
        }
    }
    SUBCASE("zero params give the uniform distribution") {
        const auto p = zero_params(ModelConfig{}, vocab);
        for (double q : forward_probs(p, std::vector<TokenId>(5, 4))) {
            CHECK(q == doctest::Approx(1.0 / 24).epsilon(1e-15));
        }
    }
    SUBCASE("wrong context length") {
        const auto p = init_params(ModelConfig{}, vocab);
        CHECK_THROWS_AS(forward_probs(p, std::vector<TokenId>(4, 4)), ShapeError);
        CHECK_THROWS_AS(forward_probs(p, std::vector<TokenId>(5, 99)), ShapeError);
    }
}

TEST_CASE("nll_loss") {
    SUBCASE("uniform model over V = 8") {
        const auto p = zero_params(ModelConfig{}, support::small_vocab(4));
        CHECK(nll_loss(p, std::vector<TokenId>(5, 4), 6) == doctest::Approx(std::log(8.0)).epsilon(1e-15));
    }
    SUBCASE("certain prediction") {
        auto p = zero_params(ModelConfig{}, support::small_vocab(4));
        p[TensorId::b2].data[5] = 1e4;
        CHECK(nll_loss(p, std::vector<TokenId>(5, 4), 5) == 0.0);
    }
    SUBCASE("log of forward_probs") {
        const auto p = support::random_model(ModelConfig{}, support::small_vocab(12), 3);
        oracle::RefSplitMix rng{4};
        for (int i = 0; i < 10; ++i) {
            const auto ctx = support::random_context(p, rng);
            const auto label = static_cast<TokenId>(rng.next() % p.vocab.size());
            CHECK(nll_loss(p, ctx, label) == doctest::Approx(-std::log(forward_probs(p, ctx)[label])).epsilon(1e-13));
        }
    }
}

TEST_CASE("quad finite-difference oracle") {
    SUBCASE("b2 differences equal p minus one-hot from the reference forward pass") {
        const auto p = support::random_model(ModelConfig{}, support::small_vocab(13), 17);
        oracle::RefSplitMix rng{3};
        const auto ctx = support::random_context(p, rng);
        const TokenId label = 7;
        const auto probs = oracle::RefModel::from(p).probs(ctx);
        const auto fd = oracle::finite_difference(p, ctx, label);
        for (std::size_t k = 0; k < probs.size(); ++k) {
            const double expected = static_cast<double>(probs[k] - (k == label ? 1.0L : 0.0L));
            CHECK(oracle::relative_error(fd.at(TensorId::b2)[k], expected) < 1e-9);
        }
    }
    SUBCASE("short Taylor exp agrees with expq") {
        for (double u : {0.0, 1e-12, -3e-9, 1e-6, -1.5e-5, 0x1p-16, -0x1p-16, 1e-3, -0.7}) {
            const oracle::quad q = u;
            CHECK(fabsq(oracle::exp_near_zero(q) - expq(q)) <= 1e-32 * expq(q));
        }
    }
}

TEST_CASE("analytic gradient matches central finite differences") {
    const auto vocab = support::small_vocab(11);
    oracle::RefSplitMix rng{2024};
    double worst = 0.0;
    for (auto objective : {Objective::MLM, Objective::CLM}) {
        ModelConfig cfg;
        cfg.objective = objective;
        cfg.d_embed = 6;
        cfg.d_hidden = 7;
        for (std::uint64_t inst = 0; inst < 10; ++inst) {
            const auto p = support::random_model(cfg, vocab, 100 + inst);
            const auto ctx = support::random_context(p, rng);
            const auto label = static_cast<TokenId>(rng.next() % p.vocab.size());
            const auto g = full_grad(p, ctx, label);
            const auto fd = oracle::finite_difference(p, ctx, label);
            for (auto id : kAllTensors) {
                const auto& a = at(g, id).data;
                const auto& n = fd.at(id);
                REQUIRE(a.size() == n.size());
                for (std::size_t i = 0; i < a.size(); ++i) {
                    worst = std::max(worst, oracle::relative_error(a[i], n[i]));
                }
            }
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("grad slices and identities") {
    const auto p = support::random_model(ModelConfig{}, support::small_vocab(9), 5);
    const std::vector<TokenId> ctx{4, 5, 0, 6, 7};
    const TokenId label = 8;

    SUBCASE("b2 gradient is p minus one-hot") {
        auto sel = std::make_shared<const ParamSelection>(std::vector<TensorId>{TensorId::b2}, p);
        const auto g = grad(p, ctx, label, sel);
        const auto probs = forward_probs(p, ctx);
        REQUIRE(g.values.size() == probs.size());
        for (std::size_t k = 0; k < probs.size(); ++k) {
            CHECK(g.values[k] == doctest::Approx(probs[k] - (k == label ? 1.0 : 0.0)).epsilon(1e-14));
        }
    }
    SUBCASE("zero W2 gives a zero b1 slice") {
        auto q = p;
        std::fill(q[TensorId::W2].data.begin(), q[TensorId::W2].data.end(), 0.0);
        auto sel = std::make_shared<const ParamSelection>(std::vector<TensorId>{TensorId::b1}, q);
        for (double v : grad(q, ctx, label, sel).values) {
            CHECK(v == 0.0);
        }
    }
    SUBCASE("selection order and masking") {
        const auto full = full_grad(p, ctx, label);
        auto sel = std::make_shared<const ParamSelection>(std::vector<TensorId>{TensorId::b2, TensorId::W1}, p);
        const auto g = grad(p, ctx, label, sel);
        const std::size_t nb2 = p[TensorId::b2].size();
        CHECK(sel->total_dim() == nb2 + p[TensorId::W1].size());
        CHECK(g.values[3] == at(full, TensorId::b2).data[3]);
        CHECK(g.values[nb2 + 17] == at(full, TensorId::W1).data[17]);
        const auto loc = sel->locate(nb2 + 17);
        CHECK(loc.tensor == TensorId::W1);
        CHECK(loc.index == 17);

        auto mask = std::make_shared<const PruneMask>(PruneMask{{1, 3, nb2 + 17}, MaskOrigin::PRE});
        const auto masked = grad(p, ctx, label, sel, mask);
        CHECK(masked.values == std::vector<double>{g.values[1], g.values[3], g.values[nb2 + 17]});
    }
    SUBCASE("selection validation") {
        CHECK_THROWS_AS(ParamSelection(std::vector<TensorId>{}, p), ConfigError);
        CHECK_THROWS_AS(ParamSelection(std::vector<TensorId>{TensorId::E, TensorId::E}, p), ConfigError);
        CHECK_THROWS_AS((PruneMask{{3, 2}, MaskOrigin::PRE}.validate(10)), ShapeError);
        CHECK_THROWS_AS((PruneMask{{10}, MaskOrigin::PRE}.validate(10)), ShapeError);
    }
}

TEST_CASE("train_base") {
    const auto corpus = generate_corpus(default_pronoun_grammar(), 400);
    const auto p0 = init_params(ModelConfig{}, build_vocab(corpus));
    BaseTrainConfig cfg;
    cfg.steps = 40;

    SUBCASE("deterministic") {
        const auto a = train_base(p0, corpus, cfg);
        const auto b = train_base(p0, corpus, cfg);
        CHECK(a.params.bit_equal(b.params));
        CHECK_FALSE(a.params.bit_equal(p0));
    }
    SUBCASE("lr = 0 leaves parameters unchanged") {
        cfg.lr = 0.0;
        CHECK(train_base(p0, corpus, cfg).params.bit_equal(p0));
    }
    SUBCASE("steps = 0 rejected") {
        cfg.steps = 0;
        CHECK_THROWS_AS(train_base(p0, corpus, cfg), ConfigError);
    }
    SUBCASE("divergence reports the step") {
        cfg.lr = 1e300;
        CHECK_THROWS_WITH_AS(train_base(p0, corpus, cfg), doctest::Contains("step"), DivergenceError);
    }
    SUBCASE("CLM objective trains too") {
        ModelConfig clm;
        clm.objective = Objective::CLM;
        const auto q0 = init_params(clm, build_vocab(corpus));
        cfg.steps = 200;
        const auto r = train_base(q0, corpus, cfg);
        CHECK(r.final_probe_loss < r.initial_probe_loss);
    }
}

TEST_CASE("lms") {
    const auto vocab = support::small_vocab(96);
    REQUIRE(vocab.size() == 100);

    SUBCASE("uniform model with lowest-id tie-break") {
        const auto p = zero_params(ModelConfig{}, vocab);
        std::vector<NeutralInstance> neutral;
        for (int i = 0; i < 10; ++i) {
            neutral.push_back({{"w1", "w5", "w9"}, static_cast<std::size_t>(i % 3)});
        }
        CHECK(lms(p, neutral) == 0.0);
    }
    SUBCASE("model that always ranks the true token first") {
        auto p = zero_params(ModelConfig{}, vocab);
        p[TensorId::b2].data[*vocab.find("w7")] = 5.0;
        const std::vector<NeutralInstance> neutral{{{"w7", "w3"}, 0}, {{"w2", "w7"}, 1}};
        CHECK(lms(p, neutral) == 1.0);
    }
    SUBCASE("empty set") {
        CHECK_THROWS_AS(lms(zero_params(ModelConfig{}, vocab), std::vector<NeutralInstance>{}), DataError);
    }
    SUBCASE("argmax tie-break") {
        CHECK(argmax_lowest(std::vector<double>{0.1, 0.3, 0.3, 0.2}) == 1);
    }
}

TEST_CASE("checkpoint round trip and integrity") {
    support::TempDir tmp;
    const auto p = support::random_model(ModelConfig{}, support::small_vocab(7), 17);
    const auto dir = tmp.path() / "ckpt";
    save_checkpoint(p, dir);

    SUBCASE("bitwise round trip") {
        const auto q = load_checkpoint(dir);
        CHECK(q.bit_equal(p));
        CHECK(content_hash(q) == content_hash(p));
    }
    SUBCASE("flipping one stored float changes exactly that coordinate") {
        auto bytes = read_file(dir / "tensors.bin");
        const std::size_t e_bytes = p[TensorId::E].size() * 8;
        const std::size_t target = 13;
        bytes[e_bytes + target * 8 + 7] ^= 0x40;
        write_file_atomic(dir / "tensors.bin", bytes);
        const auto q = load_checkpoint(dir);
        for (auto id : kAllTensors) {
            for (std::size_t i = 0; i < p[id].size(); ++i) {
                const bool same = std::memcmp(&p[id].data[i], &q[id].data[i], sizeof(double)) == 0;
                CHECK(same == !(id == TensorId::W1 && i == target));
            }
        }
        CHECK(content_hash(q) != content_hash(p));
    }
    SUBCASE("manifest byte-count mismatch") {
        auto m = read_json(dir / "manifest.json");
        m["tensors"][1]["nbytes"] = m["tensors"][1]["nbytes"].get<std::size_t>() + 8;
        write_file_atomic(dir / "manifest.json", dump_json(m));
        CHECK_THROWS_AS(load_checkpoint(dir), IntegrityError);
    }
    SUBCASE("truncated tensor file") {
        auto bytes = read_file(dir / "tensors.bin");
        bytes.resize(bytes.size() - 3);
        write_file_atomic(dir / "tensors.bin", bytes);
        CHECK_THROWS_AS(load_checkpoint(dir), IntegrityError);
    }
    SUBCASE("garbled manifest") {
        write_file_atomic(dir / "manifest.json", "{ not json");
        CHECK_THROWS_AS(load_checkpoint(dir), IntegrityError);
    }
    SUBCASE("missing directory") { CHECK_THROWS_AS(load_checkpoint(tmp.path() / "nope"), IntegrityError); }
}
