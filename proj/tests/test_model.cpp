#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <vector>

#include <wta/checkpoint.hpp>
#include <wta/error.hpp>
#include <wta/grad_check.hpp>
#include <wta/loss.hpp>
#include <wta/model.hpp>

#include "support/reference.hpp"

using namespace wta;

namespace {

Network make_net(std::size_t k, bool combine, std::uint64_t seed = 1, std::size_t depth = 2, std::size_t width = 4) {
	NetworkConfig c;
	c.heads = k;
	c.combine = combine;
	c.depth = depth;
	c.width = width;
	Network net(c);
	init_params(net, Rng(seed));
	return net;
}

Tensor image_batch(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed) {
	Rng rng(seed);
	return ref::random_tensor({n, 3, h, w}, rng, 0.0, 1.0);
}

} // namespace

TEST(Combination, ExtendedCountFormula) {
	for (std::size_t k = 1; k <= 8; ++k) {
		EXPECT_EQ(extended_head_count(k, true), k * (k + 1) / 2);
		std::vector<Tensor> base(k, Tensor({2}));
		EXPECT_EQ(combine_heads(base).size(), k * (k + 1) / 2);
	}
	EXPECT_EQ(extended_head_count(3, true), 6u);
	EXPECT_EQ(extended_head_count(4, true), 10u);
}

TEST(Combination, PairOrderAndIndex) {
	std::vector<Tensor> base(4, Tensor({1}));
	const auto ext = combine_heads(base);
	for (std::size_t e = 0; e < ext.size(); ++e) {
		EXPECT_LE(ext[e].i, ext[e].j);
		EXPECT_EQ(pair_index(ext[e].i, ext[e].j, 4), e);
	}
}

TEST(Combination, DiagonalBitIdentical) {
	Rng rng(2);
	std::vector<Tensor> base;
	for (int k = 0; k < 5; ++k)
		base.push_back(ref::random_tensor({3, 4, 4}, rng));
	for (const auto& e : combine_heads(base)) {
		if (e.i == e.j) {
			EXPECT_EQ(e.value, base[e.i]);
		}
	}
}

TEST(Combination, SameBaseGivesSameOutputs) {
	Rng rng(3);
	Tensor a = ref::random_tensor({2, 3}, rng);
	std::vector<Tensor> base{a, a};
	for (const auto& e : combine_heads(base))
		EXPECT_EQ(e.value, a);
}

TEST(Combination, ZerosAndOnes) {
	std::vector<Tensor> base{Tensor::zeros({3}), Tensor::ones({3})};
	const auto ext = combine_heads(base);
	ASSERT_EQ(ext.size(), 3u);
	EXPECT_EQ(ext[0].value, Tensor::zeros({3}));
	EXPECT_EQ(ext[1].value, Tensor::full({3}, 0.5));
	EXPECT_EQ(ext[2].value, Tensor::ones({3}));
}

TEST(Combination, EmptyIsConfigError) {
	std::vector<Tensor> none;
	EXPECT_THROW(combine_heads(none), ConfigError);
}

TEST(Combination, PermutationGivesSameMultiset) {
	Rng rng(4);
	std::vector<Tensor> base;
	for (int k = 0; k < 4; ++k)
		base.push_back(ref::random_tensor({6}, rng));
	std::vector<Tensor> perm{base[2], base[0], base[3], base[1]};
	auto key = [](const std::vector<ExtendedHead>& ext) {
		std::vector<std::vector<double>> v;
		for (const auto& e : ext)
			v.emplace_back(e.value.data().begin(), e.value.data().end());
		std::sort(v.begin(), v.end());
		return v;
	};
	EXPECT_EQ(key(combine_heads(base)), key(combine_heads(perm)));
}

TEST(Combination, BackwardSplitsGradient) {
	std::vector<double> g{1.0, -2.0};
	std::vector<Tensor> grads(3, Tensor({1, 2}));
	backward_through_combination(0, 2, g, grads, 0);
	EXPECT_EQ(grads[0][0], 0.5);
	EXPECT_EQ(grads[2][1], -1.0);
	EXPECT_EQ(max_abs(grads[1]), 0.0);
	std::vector<Tensor> diag(3, Tensor({1, 2}));
	backward_through_combination(1, 1, g, diag, 0);
	EXPECT_EQ(diag[1][0], 1.0);
	EXPECT_EQ(max_abs(diag[0]), 0.0);
	EXPECT_EQ(max_abs(diag[2]), 0.0);
}

TEST(Network, OutputCounts) {
	const Tensor x = image_batch(2, 6, 6, 5);
	EXPECT_EQ(make_net(1, false).forward(x).outputs.base.size(), 1u);
	EXPECT_EQ(make_net(1, false).forward(x).outputs.extended.size(), 1u);
	const auto out = make_net(4, true).forward(x).outputs;
	EXPECT_EQ(out.base.size(), 4u);
	EXPECT_EQ(out.extended.size(), 10u);
	for (const auto& b : out.base)
		EXPECT_EQ(b.shape(), x.shape());
	const auto plain = make_net(3, false).forward(x).outputs;
	for (std::size_t k = 0; k < 3; ++k) {
		EXPECT_EQ(plain.extended[k].i, k);
		EXPECT_EQ(plain.extended[k].j, k);
		EXPECT_EQ(plain.extended[k].value, plain.base[k]);
	}
}

TEST(Network, ZeroOutputLayerIsIdentity) {
	Network net = make_net(3, true);
	net.out_weight().value.fill(0.0);
	net.out_bias().value.fill(0.0);
	const Tensor x = image_batch(2, 5, 7, 6);
	for (const auto& e : net.forward(x).outputs.extended)
		EXPECT_EQ(e.value, x);
}

TEST(Network, ChannelMismatchIsConfigError) {
	Network net = make_net(2, false);
	EXPECT_THROW(net.forward(Tensor({1, 1, 5, 5})), ConfigError);
}

TEST(Network, OutputLayerParameterCount) {
	for (std::size_t k = 1; k <= 5; ++k) {
		const std::size_t plain = make_net(k, false).output_layer_parameter_count();
		EXPECT_EQ(plain, make_net(k, true).output_layer_parameter_count());
		EXPECT_EQ(plain, k * make_net(1, false).output_layer_parameter_count());
	}
}

TEST(Network, InitBreaksSymmetryAndDependsOnSeed) {
	const Tensor x = image_batch(1, 6, 6, 7);
	const auto a = make_net(2, false, 1).forward(x).outputs;
	EXPECT_GT(max_abs_diff(a.base[0], a.base[1]), 0.0);
	const auto b = make_net(2, false, 2).forward(x).outputs;
	EXPECT_GT(max_abs_diff(a.base[0], b.base[0]), 0.0);
}

TEST(Network, InitIsNestedAcrossHeadCounts) {
	const Tensor x = image_batch(1, 6, 6, 8);
	const auto small = make_net(2, false, 9).forward(x).outputs;
	const auto large = make_net(4, false, 9).forward(x).outputs;
	EXPECT_EQ(small.base[0], large.base[0]);
	EXPECT_EQ(small.base[1], large.base[1]);
}

TEST(Network, GradCheckTinyNet) {
	Network net = make_net(2, true, 3, 2, 3);
	const Tensor x = image_batch(1, 6, 6, 10);
	const Tensor y = image_batch(1, 6, 6, 11);
	const LossKind kind = LossKind::charbonnier();
	// Fixed weighting over all extended heads exercises every path.
	auto f = [&] {
		const auto out = net.forward(x).outputs;
		double s = 0.0;
		for (std::size_t e = 0; e < out.extended.size(); ++e)
			s += static_cast<double>(e + 1) * loss(kind, out.extended[e].value, y);
		return s;
	};
	auto g = [&] {
		net.zero_grads();
		const auto pass = net.forward(x);
		std::vector<Tensor> base(2, Tensor(x.shape()));
		for (std::size_t e = 0; e < pass.outputs.extended.size(); ++e) {
			const auto& h = pass.outputs.extended[e];
			std::vector<double> gr(x.numel(), 0.0);
			loss_backward(kind, h.value.data(), y.data(), static_cast<double>(e + 1), gr);
			backward_through_combination(h.i, h.j, gr, base, 0);
		}
		net.backward(pass, base);
	};
	const auto params = net.parameter_ptrs();
	const auto report = grad_check(f, g, params);
	EXPECT_TRUE(report.passed()) << report;
}

TEST(Network, TrunkGetsGradientWhicheverHeadIsSelected) {
	for (std::size_t head = 0; head < 3; ++head) {
		Network net = make_net(3, false, 4);
		const Tensor x = image_batch(1, 6, 6, 12);
		const auto pass = net.forward(x);
		std::vector<Tensor> base(3, Tensor(x.shape()));
		Rng rng(head);
		base[head] = ref::random_tensor(x.shape(), rng);
		net.backward(pass, base);
		for (const char* id : {"in.weight", "block0.conv1.weight", "block1.conv2.weight"})
			EXPECT_GT(l2_norm(net.parameter(id).grad), 0.0) << id << " head " << head;
	}
}

TEST(Checkpoint, RoundTripIsBitExact) {
	const auto path = (std::filesystem::temp_directory_path() / "wta_test_ckpt.bin").string();
	Network net = make_net(3, true, 5);
	save_checkpoint(path, net, 17, 5);
	const Checkpoint ck = load_checkpoint(path);
	EXPECT_EQ(ck.step, 17u);
	EXPECT_EQ(ck.seed, 5u);
	EXPECT_EQ(ck.net.config(), net.config());
	const Tensor x = image_batch(2, 6, 6, 13);
	const auto a = net.forward(x).outputs, b = ck.net.forward(x).outputs;
	for (std::size_t e = 0; e < a.extended.size(); ++e)
		EXPECT_EQ(a.extended[e].value, b.extended[e].value);
	std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptFileReportsPathAndOffset) {
	const auto path = (std::filesystem::temp_directory_path() / "wta_test_corrupt.bin").string();
	Network net = make_net(2, false, 6);
	save_checkpoint(path, net, 1, 6);
	std::filesystem::resize_file(path, std::filesystem::file_size(path) - 9);
	try {
		load_checkpoint(path);
		FAIL();
	} catch (const IoError& e) {
		const std::string m = e.what();
		EXPECT_NE(m.find(path), std::string::npos) << m;
		EXPECT_NE(m.find("byte offset"), std::string::npos) << m;
	}
	EXPECT_THROW(load_checkpoint(path + ".missing"), IoError);
	std::filesystem::remove(path);
}
