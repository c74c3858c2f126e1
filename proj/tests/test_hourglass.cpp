#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "hpe/checkpoint.hpp"
#include "hpe/gradcheck.hpp"
#include "hpe/hourglass.hpp"
#include "helpers.hpp"

using namespace hpe;
using hpe::test::random_tensor;

namespace {

HourglassConfig mini_config() {
    HourglassConfig c;
    c.input_res = 8;
    c.output_res = 4;
    c.stacks = 2;
    c.channels = 4;
    c.hg_depth = 1;
    c.joints = 2;
    c.bones = 1;
    c.batchnorm_enabled = false;
    return c;
}

Tensor<double> random_voxels(int r, std::mt19937_64& rng, double density = 0.2) {
    Tensor<double> t({1, r, r, r});
    std::bernoulli_distribution occ(density);
    for (auto& v : t.values) {
        v = occ(rng) ? 1.0 : 0.0;
    }
    return t;
}

// Independent parameter count from the architecture rules alone.
struct ParamAudit {
    i64 trainable = 0;
    i64 buffers = 0;

    void conv(i64 cin, i64 cout, i64 k) { trainable += cout * cin * k * k * k + cout; }
    void bn(i64 c) {
        trainable += 2 * c;
        buffers += 2 * c;
    }
    void resblock(i64 cin, i64 cout, bool use_bn) {
        if (use_bn) {
            bn(cin);
            bn(cout);
        }
        conv(cin, cout, 3);
        conv(cout, cout, 3);
        if (cin != cout) {
            conv(cin, cout, 1);
        }
    }
    void head(i64 c, i64 out) {
        conv(c, c, 1);
        conv(c, out, 1);
    }
    static ParamAudit of(const HourglassConfig& c) {
        ParamAudit a;
        const i64 C = c.channels;
        a.conv(1, c.stem_channels(), 3);
        a.resblock(c.stem_channels(), C, c.batchnorm_enabled);
        for (int s = 0; s < c.stacks; ++s) {
            for (int l = 0; l < c.hg_depth; ++l) {
                a.resblock(C, C, c.batchnorm_enabled);  // up
                a.resblock(C, C, c.batchnorm_enabled);  // low1
                a.resblock(C, C, c.batchnorm_enabled);  // low3
            }
            a.resblock(C, C, c.batchnorm_enabled);  // bottom
            a.resblock(C, C, c.batchnorm_enabled);  // post-hourglass
            a.head(C, c.joints);
            if (c.bone_heads_enabled && c.bones > 0 && s + 1 < c.stacks) {
                a.head(C, c.bones);
            }
            if (s + 1 < c.stacks) {
                a.conv(c.joints, C, 1);  // remix
            }
        }
        return a;
    }
};

}  // namespace

TEST_CASE("same seed builds bitwise-identical parameters") {
    auto a = build_model<float>(mini_config(), 42);
    auto b = build_model<float>(mini_config(), 42);
    REQUIRE(a.params.count() == b.params.count());
    for (std::size_t i = 0; i < a.params.count(); ++i) {
        CHECK(a.params.at(static_cast<i64>(i)).name == b.params.at(static_cast<i64>(i)).name);
        CHECK(a.params.at(static_cast<i64>(i)).value.values ==
              b.params.at(static_cast<i64>(i)).value.values);
    }
    auto c = build_model<float>(mini_config(), 43);
    CHECK(a.params.at(0).value.values != c.params.at(0).value.values);
}

TEST_CASE("bone heads exist on every stack except the last") {
    HourglassConfig cfg;
    cfg.input_res = 16;
    cfg.output_res = 8;
    cfg.stacks = 3;
    cfg.channels = 4;
    cfg.hg_depth = 1;
    cfg.joints = 21;
    cfg.bones = 20;
    auto m = build_model<double>(cfg, 1);
    CHECK(m.params.find("stack0.head_b.conv1.weight") != nullptr);
    CHECK(m.params.find("stack1.head_b.conv1.weight") != nullptr);
    CHECK(m.params.find("stack2.head_b.conv1.weight") == nullptr);
    CHECK(m.params.find("stack2.head_j.conv2.weight") != nullptr);
}

TEST_CASE("disabling bone heads removes exactly the bone parameters, trunk init unchanged") {
    HourglassConfig with = mini_config();
    HourglassConfig without = mini_config();
    without.bone_heads_enabled = false;
    auto a = build_model<double>(with, 7);
    auto b = build_model<double>(without, 7);
    CHECK(a.params.count() > b.params.count());
    for (const auto& p : b.params.entries()) {
        CHECK(p.name.find("head_b") == std::string::npos);
        const auto* q = a.params.find(p.name);
        REQUIRE(q != nullptr);
        CHECK(q->value.values == p.value.values);
    }
}

TEST_CASE("parameter count matches the closed-form architecture audit") {
    for (bool bn : {false, true}) {
        HourglassConfig cfg = mini_config();
        cfg.batchnorm_enabled = bn;
        auto m = build_model<double>(cfg, 3);
        const ParamAudit audit = ParamAudit::of(cfg);
        CHECK(m.params.total_scalar_count(true) == audit.trainable);
        CHECK(m.params.total_scalar_count(false) == audit.trainable + audit.buffers);
    }

    // the default configuration of the full network
    HourglassConfig full;
    auto m = build_model<float>(full, 1);
    const ParamAudit audit = ParamAudit::of(full);
    CHECK(m.params.total_scalar_count(true) == audit.trainable);
    CHECK(m.params.total_scalar_count(false) == audit.trainable + audit.buffers);
}

TEST_CASE("invalid configurations are rejected") {
    HourglassConfig cfg = mini_config();
    cfg.input_res = 10;  // not 2 * output_res
    CHECK_THROWS_AS(build_model<double>(cfg, 1), ConfigError);

    cfg = mini_config();
    cfg.hg_depth = 3;  // 4 / 2^3 < 2
    CHECK_THROWS_AS(build_model<double>(cfg, 1), ConfigError);

    cfg = mini_config();
    cfg.stacks = 0;
    CHECK_THROWS_AS(build_model<double>(cfg, 1), ConfigError);
}

TEST_CASE("default config forward emits the documented output shapes") {
    HourglassConfig full;  // 64 -> 32, 2 stacks, 128 channels, 21 joints, 20 bones
    auto m = build_model<float>(full, 5);
    std::mt19937_64 rng(19);
    Tensor<float> voxels({1, 64, 64, 64});
    std::bernoulli_distribution occ(0.1);
    for (auto& v : voxels.values) {
        v = occ(rng) ? 1.0f : 0.0f;
    }
    auto out = forward(m, voxels, Mode::eval, nullptr);
    REQUIRE(out.joints.size() == 2);
    REQUIRE(out.bones.size() == 1);
    CHECK(out.joints[0].shape == Shape{21, 32, 32, 32});
    CHECK(out.joints[1].shape == Shape{21, 32, 32, 32});
    CHECK(out.bones[0].shape == Shape{20, 32, 32, 32});
}

TEST_CASE("wrong input resolution is a dimension error") {
    auto m = build_model<double>(mini_config(), 1);
    Tensor<double> wrong({1, 16, 16, 16});
    CHECK_THROWS_AS(forward(m, wrong, Mode::eval, nullptr), DimensionError);
}

TEST_CASE("all-zero input with zeroed head weights yields the head bias") {
    auto m = build_model<double>(mini_config(), 1);
    for (auto& p : m.params.entries()) {
        if (p.name.find("head_j") != std::string::npos || p.name.find("head_b") != std::string::npos) {
            std::fill(p.value.values.begin(), p.value.values.end(), 0.0);
        }
    }
    m.params.find("stack1.head_j.conv2.bias")->value.values = {0.25, -0.5};
    Tensor<double> zeros({1, 8, 8, 8});
    auto out = forward(m, zeros, Mode::eval, nullptr);
    const i64 ch = 4 * 4 * 4;
    for (i64 i = 0; i < ch; ++i) {
        CHECK(out.joints[1].values[i] == 0.25);
        CHECK(out.joints[1].values[ch + i] == -0.5);
    }
}

TEST_CASE("eval-mode forward is deterministic") {
    auto m = build_model<float>(mini_config(), 9);
    std::mt19937_64 rng(23);
    auto voxels = random_voxels(8, rng).cast<float>();
    auto a = forward(m, voxels, Mode::eval, nullptr);
    auto b = forward(m, voxels, Mode::eval, nullptr);
    CHECK(a.joints[0].values == b.joints[0].values);
    CHECK(a.joints[1].values == b.joints[1].values);
    CHECK(a.bones[0].values == b.bones[0].values);
}

TEST_CASE("backward without a forward trace is a state error") {
    auto m = build_model<double>(mini_config(), 1);
    ForwardTrace<double> trace;
    StackOutputs<double> grads;
    grads.joints.resize(2);
    grads.bones.resize(1);
    CHECK_THROWS_AS(backward(m, trace, grads), StateError);
}

TEST_CASE("zero output gradients give zero parameter gradients") {
    auto m = build_model<double>(mini_config(), 11);
    std::mt19937_64 rng(29);
    auto voxels = random_voxels(8, rng);
    ForwardTrace<double> trace;
    auto out = forward(m, voxels, Mode::train, &trace);
    StackOutputs<double> grads;
    for (const auto& j : out.joints) {
        grads.joints.push_back(Tensor<double>(j.shape));
    }
    for (const auto& b : out.bones) {
        grads.bones.push_back(Tensor<double>(b.shape));
    }
    m.params.zero_grads();
    auto gin = backward(m, trace, grads);
    for (const auto& p : m.params.entries()) {
        if (!p.trainable) {
            continue;
        }
        for (double g : p.value.grad) {
            CHECK(g == 0.0);
        }
    }
    for (double g : gin.values) {
        CHECK(g == 0.0);
    }
}

TEST_CASE("a stack-2-only loss still reaches the stem (intermediate supervision trunk)") {
    auto m = build_model<double>(mini_config(), 13);
    std::mt19937_64 rng(31);
    auto voxels = random_voxels(8, rng);
    ForwardTrace<double> trace;
    auto out = forward(m, voxels, Mode::train, &trace);
    StackOutputs<double> grads;
    grads.joints.push_back(Tensor<double>(out.joints[0].shape));              // stack 1: zero
    grads.joints.push_back(Tensor<double>::full(out.joints[1].shape, 1.0));  // stack 2 only
    grads.bones.push_back(Tensor<double>(out.bones[0].shape));
    m.params.zero_grads();
    backward(m, trace, grads);
    double stem_norm = 0.0;
    for (double g : m.params.find("stem.conv.weight")->value.grad) {
        stem_norm += g * g;
    }
    CHECK(stem_norm > 0.0);
}

TEST_CASE("full-model gradcheck on the miniature config") {
    auto m = build_model<double>(mini_config(), 17);
    std::mt19937_64 rng(37);
    // Continuous input keeps every pre-activation away from the relu kink and
    // every pool window tie-free, which finite differences require.
    auto voxels = random_tensor<double>({1, 8, 8, 8}, rng, 0.05, 1.0);
    auto jt = random_tensor<double>({2, 4, 4, 4}, rng, 0.0, 1.0);
    auto bt = random_tensor<double>({1, 4, 4, 4}, rng, 0.0, 1.0);

    auto loss = [&] {
        auto out = forward(m, voxels, Mode::eval, nullptr);
        double acc = 0.0;
        for (const auto& j : out.joints) {
            acc += ops::mse_sum(j, jt);
        }
        acc += ops::mse_sum(out.bones[0], bt);
        return acc;
    };
    auto analytic = [&] {
        m.params.zero_grads();
        voxels.zero_grad();
        ForwardTrace<double> trace;
        auto out = forward(m, voxels, Mode::train, &trace);
        StackOutputs<double> grads;
        for (const auto& j : out.joints) {
            grads.joints.push_back(ops::mse_sum_backward(j, jt));
        }
        grads.bones.push_back(ops::mse_sum_backward(out.bones[0], bt));
        voxels.grad = backward(m, trace, grads).values;
    };

    std::vector<GradCheckLeaf<double>> leaves;
    for (auto& p : m.params.entries()) {
        if (p.trainable) {
            leaves.push_back({p.name, &p.value});
        }
    }
    leaves.push_back({"input", &voxels});
    auto result = gradcheck<double>(leaves, loss, analytic, 1e-5);
    CAPTURE(result.worst);
    CHECK(result.max_rel_err < 1e-4);
}

TEST_CASE("checkpoint round-trip is bitwise and forward-identical") {
    const auto dir = std::filesystem::temp_directory_path() / "hpe_test_ckpt";
    std::filesystem::create_directories(dir);
    const auto path = dir / "model.ckpt";

    HourglassConfig cfg = mini_config();
    cfg.batchnorm_enabled = true;
    auto m = build_model<float>(cfg, 21);
    std::mt19937_64 rng(41);
    auto voxels = random_voxels(8, rng).cast<float>();
    // push the running stats off their init values first
    ForwardTrace<float> trace;
    forward(m, voxels, Mode::train, &trace);
    auto before = forward(m, voxels, Mode::eval, nullptr);

    save_checkpoint(m, path);
    auto loaded = load_checkpoint<float>(path);
    REQUIRE(loaded.params.count() == m.params.count());
    for (std::size_t i = 0; i < m.params.count(); ++i) {
        CHECK(loaded.params.at(static_cast<i64>(i)).value.values ==
              m.params.at(static_cast<i64>(i)).value.values);
    }
    auto after = forward(loaded, voxels, Mode::eval, nullptr);
    CHECK(before.joints[0].values == after.joints[0].values);
    CHECK(before.joints[1].values == after.joints[1].values);

    const auto info = peek_checkpoint(path);
    CHECK(info.config.joints == cfg.joints);
    CHECK(info.dtype == "f32");

    // precision mismatch is an explicit error
    CHECK_THROWS_AS(load_checkpoint<double>(path), CheckpointError);

    // corrupt one payload byte: checksum must catch it
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(200);
        char b;
        f.seekg(200);
        f.read(&b, 1);
        b = static_cast<char>(b ^ 0x40);
        f.seekp(200);
        f.write(&b, 1);
    }
    CHECK_THROWS_AS(load_checkpoint<float>(path), CheckpointError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("outputs change only inside the stack-1 receptive field") {
    HourglassConfig cfg;
    cfg.input_res = 64;
    cfg.output_res = 32;
    cfg.stacks = 1;
    cfg.channels = 4;
    cfg.hg_depth = 1;
    cfg.joints = 2;
    cfg.bones = 0;
    cfg.bone_heads_enabled = false;
    cfg.batchnorm_enabled = false;
    auto m = build_model<float>(cfg, 23);

    // Receptive-field radius in input voxels, derived from the architecture
    // constants alone: (jump, radius) composition along the deepest path.
    double jump = 1.0, radius = 0.0;
    auto conv3 = [&] { radius += jump; };
    auto res = [&] {
        conv3();
        conv3();
    };
    radius += jump;  // stem conv k3
    jump *= 2.0;     // stem stride 2
    res();           // stem residual
    res();           // hg level-0 up/low1 (worst path goes low)
    jump *= 2.0;     // pool
    radius += jump * 0.5;
    res();        // low1
    res();        // bottom
    res();        // low3
    jump /= 2.0;  // upsample
    res();        // post-hourglass
    const double rf_input_voxels = radius;
    REQUIRE(rf_input_voxels < 60.0);  // probe is only meaningful if RF is not global

    std::mt19937_64 rng(47);
    Tensor<float> a({1, 64, 64, 64});
    std::bernoulli_distribution occ(0.08);
    for (auto& v : a.values) {
        v = occ(rng) ? 1.0f : 0.0f;
    }
    Tensor<float> b = a;
    // flip a 2^3 neighborhood near the low corner
    const int px = 6, py = 7, pz = 5;
    for (int dz = 0; dz < 2; ++dz) {
        for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
                b.at4(0, pz + dz, py + dy, px + dx) = 1.0f;
            }
        }
    }

    auto out_a = forward(m, a, Mode::eval, nullptr);
    auto out_b = forward(m, b, Mode::eval, nullptr);
    int changed = 0;
    const double max_in = rf_input_voxels + 2.0;  // perturbed block is 2 voxels wide
    for (i64 j = 0; j < 2; ++j) {
        for (i64 z = 0; z < 32; ++z) {
            for (i64 y = 0; y < 32; ++y) {
                for (i64 x = 0; x < 32; ++x) {
                    if (out_a.joints[0].at4(j, z, y, x) != out_b.joints[0].at4(j, z, y, x)) {
                        ++changed;
                        // center of this output voxel in input coordinates
                        const double cx = 2.0 * x + 0.5, cy = 2.0 * y + 0.5, cz = 2.0 * z + 0.5;
                        const double dist = std::max({std::fabs(cx - px), std::fabs(cy - py),
                                                      std::fabs(cz - pz)});
                        CHECK(dist <= max_in);
                    }
                }
            }
        }
    }
    CHECK(changed > 0);
}
