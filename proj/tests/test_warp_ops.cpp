#include <gtest/gtest.h>

#include "support.hpp"
#include "vton/types.hpp"
#include "vton/warp_ops.hpp"

using namespace vton;
using torch::indexing::None;
using torch::indexing::Slice;

TEST(warp_ops, zero_flow_is_bit_exact_identity) {
    for (int i = 0; i < 10; ++i) {
        auto x = torch::randn({2, 5, 16, 12});
        auto out = warp(x, torch::zeros({2, 2, 16, 12}));
        EXPECT_TRUE(torch::equal(out, x));
    }
}

TEST(warp_ops, unbatched_inputs_are_accepted) {
    auto x = torch::randn({3, 8, 6});
    EXPECT_TRUE(torch::equal(warp(x, torch::zeros({2, 8, 6})), x));
}

TEST(warp_ops, integer_flow_shifts_interior) {
    auto x = torch::randn({1, 3, 16, 12});
    auto flow = torch::zeros({1, 2, 16, 12});
    flow.select(1, 0).fill_(3.0);
    auto out = warp(x, flow);
    // out(y, x) = in(y, x - 3) for x >= 3
    EXPECT_TRUE(torch::equal(out.index({Slice(), Slice(), Slice(), Slice(3, None)}),
                             x.index({Slice(), Slice(), Slice(), Slice(None, -3)})));
}

TEST(warp_ops, integer_vertical_flow) {
    auto x = torch::randn({1, 2, 10, 7});
    auto flow = torch::zeros({1, 2, 10, 7});
    flow.select(1, 1).fill_(-2.0);
    auto out = warp(x, flow);
    EXPECT_TRUE(torch::equal(out.index({Slice(), Slice(), Slice(None, -2)}), x.index({Slice(), Slice(), Slice(2, None)})));
}

TEST(warp_ops, out_of_bounds_clamps_to_border) {
    auto x = torch::arange(12, torch::kFloat32).view({1, 1, 3, 4});
    auto flow = torch::zeros({1, 2, 3, 4});
    flow.select(1, 0).fill_(100.0);
    auto out = warp(x, flow);
    // samples at x - 100 clamp to column 0
    for (int64_t c = 0; c < 4; ++c) {
        EXPECT_TRUE(torch::equal(out.index({0, 0, Slice(), c}), x.index({0, 0, Slice(), 0})));
    }
}

TEST(warp_ops, half_pixel_flow_averages_neighbours) {
    auto x = torch::tensor({0.0f, 2.0f, 4.0f, 6.0f}).view({1, 1, 1, 4});
    auto flow = torch::zeros({1, 2, 1, 4});
    flow.select(1, 0).fill_(-0.5);
    auto out = warp(x, flow);
    EXPECT_FLOAT_EQ(out[0][0][0][0].item<float>(), 1.0f);
    EXPECT_FLOAT_EQ(out[0][0][0][2].item<float>(), 5.0f);
}

TEST(warp_ops, warp_is_differentiable_in_flow) {
    auto x = torch::randn({1, 1, 6, 6});
    auto flow = (torch::rand({1, 2, 6, 6}) * 0.6 + 0.2).requires_grad_();
    warp(x, flow).sum().backward();
    EXPECT_TRUE(torch::isfinite(flow.grad()).all().item<bool>());
    EXPECT_GT(flow.grad().abs().sum().item<float>(), 0.0f);
}

TEST(warp_ops, flow_shape_mismatch_throws) {
    EXPECT_THROW(warp(torch::zeros({1, 3, 8, 8}), torch::zeros({1, 2, 4, 4})), ContractError);
}

TEST(warp_ops, correlation_of_constant_features) {
    const double v = 0.7;
    const int64_t c = 4;
    auto a = torch::full({1, c, 9, 9}, v);
    auto vol = correlate(a, a, 2);
    ASSERT_EQ(vol.size(1), 25);
    // interior pixels see every displacement inside the map: |f|^2 / C = v^2
    auto interior = vol.index({0, Slice(), Slice(2, -2), Slice(2, -2)});
    EXPECT_NEAR(interior.min().item<double>(), v * v, 1e-6);
    EXPECT_NEAR(interior.max().item<double>(), v * v, 1e-6);
}

TEST(warp_ops, correlation_of_orthogonal_features_is_zero) {
    auto a = torch::zeros({1, 2, 6, 6});
    auto b = torch::zeros({1, 2, 6, 6});
    a.select(1, 0).fill_(1.0);
    b.select(1, 1).fill_(1.0);
    EXPECT_EQ(correlate(a, b, 3).abs().max().item<float>(), 0.0f);
}

TEST(warp_ops, correlation_channel_count_and_order) {
    EXPECT_EQ(correlate(torch::randn({1, 3, 5, 5}), torch::randn({1, 3, 5, 5}), 1).size(1), 9);
    // a single hot pixel in b at (2, 3) seen from a's hot pixel at (2, 2) lies at dx = +1, dy = 0
    auto a = torch::zeros({1, 1, 5, 5});
    auto b = torch::zeros({1, 1, 5, 5});
    a[0][0][2][2] = 1.0;
    b[0][0][2][3] = 1.0;
    auto vol = correlate(a, b, 1);
    const int64_t ch = (0 + 1) * 3 + (1 + 1); // dy-major
    EXPECT_FLOAT_EQ(vol[0][ch][2][2].item<float>(), 1.0f);
    EXPECT_FLOAT_EQ(vol.sum().item<float>(), 1.0f);
}

TEST(warp_ops, upsample_doubles_size_and_values) {
    auto f = torch::full({1, 2, 4, 3}, 1.5);
    auto u = upsample_flow(f);
    EXPECT_EQ(u.size(2), 8);
    EXPECT_EQ(u.size(3), 6);
    EXPECT_NEAR(u.min().item<double>(), 3.0, 1e-6);
    EXPECT_NEAR(u.max().item<double>(), 3.0, 1e-6);
    auto d = downsample_flow(u, 1);
    EXPECT_TRUE(torch::allclose(d, f));
}

TEST(warp_ops, attention_single_key_returns_value) {
    auto q = torch::randn({1, 1, 1, 4});
    auto k = torch::randn({1, 1, 1, 4});
    auto v = torch::randn({1, 1, 1, 4});
    EXPECT_TRUE(torch::allclose(vton::scaled_dot_product_attention(q, k, v), v));
}

TEST(warp_ops, attention_matches_loop_oracle_two_positions) {
    const std::vector<std::vector<double>> q{{1.0, 0.0}, {0.5, -1.0}}, k{{0.3, 2.0}, {-1.0, 0.25}},
        v{{1.0, 2.0}, {-3.0, 0.5}};
    auto to_t = [](const std::vector<std::vector<double>>& m) {
        return torch::tensor({m[0][0], m[0][1], m[1][0], m[1][1]}, torch::kFloat64).view({2, 2});
    };
    auto out = vton::scaled_dot_product_attention(to_t(q), to_t(k), to_t(v));
    const auto ref = oracle::attention(q, k, v);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) EXPECT_NEAR(out[i][j].item<double>(), ref[i][j], 1e-12);
    }
}

TEST(warp_ops, fused_attention_matches_explicit_softmax_on_strided_views) {
    torch::manual_seed(11);
    auto qkv = torch::randn({2, 3, 4, 8, 96});
    auto q = qkv.select(1, 0).transpose(-1, -2), k = qkv.select(1, 1).transpose(-1, -2),
         v = qkv.select(1, 2).transpose(-1, -2);
    torch::Tensor w;
    auto explicit_out = vton::scaled_dot_product_attention(q, k, v, 0.0, false, &w);
    auto fused = vton::scaled_dot_product_attention(q, k, v);
    EXPECT_LT((fused - explicit_out).abs().max().item<double>(), 1e-5);
}

TEST(warp_ops, attention_rows_are_stochastic) {
    torch::Tensor w;
    vton::scaled_dot_product_attention(torch::randn({2, 4, 30, 8}), torch::randn({2, 4, 30, 8}), torch::randn({2, 4, 30, 8}),
                                 0.0, false, &w);
    EXPECT_LT((w.sum(-1) - 1.0).abs().max().item<double>(), 1e-6);
    EXPECT_GE(w.min().item<float>(), 0.0f);
}

TEST(warp_ops, cross_attention_single_position_is_value_plus_residual) {
    CrossAttention ca(4, 2, 0.0, AttentionGate{{1}});
    auto g = torch::randn({1, 4, 1, 1});
    auto p = torch::randn({1, 4, 1, 1});
    auto out = ca(g, p);
    auto v = ca->v_proj(p.flatten(2).transpose(1, 2));
    auto expected = g + ca->out_proj(v).transpose(1, 2).reshape({1, 4, 1, 1});
    EXPECT_TRUE(torch::allclose(out, expected, 1e-5, 1e-6));
}

TEST(warp_ops, cross_attention_gate_violation_throws) {
    CrossAttention ca(4, 2, 0.0, AttentionGate{{8}});
    EXPECT_THROW(ca(torch::randn({1, 4, 4, 3}), torch::randn({1, 4, 4, 3})), ContractError);
}

TEST(warp_ops, cross_attention_dropout_only_in_training) {
    CrossAttention ca(8, 2, 0.5, AttentionGate{{4}});
    auto g = torch::randn({1, 8, 4, 3});
    auto p = torch::randn({1, 8, 4, 3});
    ca->eval();
    auto a = ca(g, p);
    auto b = ca(g, p);
    EXPECT_TRUE(torch::equal(a, b));
    ca->train();
    torch::manual_seed(1);
    auto c = ca(g, p);
    EXPECT_FALSE(torch::allclose(a, c));
}
