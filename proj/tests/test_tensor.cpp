#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include <wta/error.hpp>
#include <wta/grad_check.hpp>
#include <wta/tensor.hpp>

using namespace wta;

TEST(Tensor, ShapeAndDataLength) {
	Tensor t({2, 3, 4});
	EXPECT_EQ(t.numel(), 24u);
	EXPECT_EQ(t.rank(), 3u);
	EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(Tensor, Relu) {
	Tensor t({2}, std::vector<double>{-1.0, 2.0});
	Tensor r = relu_forward(t);
	EXPECT_EQ(r[0], 0.0);
	EXPECT_EQ(r[1], 2.0);
	Tensor g = relu_backward(Tensor::ones({2}), t);
	EXPECT_EQ(g[0], 0.0);
	EXPECT_EQ(g[1], 1.0);
}

TEST(Tensor, AddZerosIsIdentity) {
	Tensor a({3}, std::vector<double>{0.1, -2.0, 3.5});
	EXPECT_EQ(add(a, Tensor::zeros({3})), a);
}

TEST(Tensor, Mean) {
	Tensor a({4}, std::vector<double>{1, 2, 3, 6});
	EXPECT_EQ(mean(a), 3.0);
	Tensor g = mean_backward({4}, 1.0);
	for (double v : g.data())
		EXPECT_EQ(v, 0.25);
}

TEST(Tensor, ElementwiseOps) {
	Tensor a({3}, std::vector<double>{1, 2, 3});
	Tensor b({3}, std::vector<double>{4, 5, 6});
	EXPECT_EQ(subtract(b, a), Tensor({3}, std::vector<double>{3, 3, 3}));
	EXPECT_EQ(scale(a, 2.0), Tensor({3}, std::vector<double>{2, 4, 6}));
	EXPECT_EQ(clamp(b, 0.0, 5.0), Tensor({3}, std::vector<double>{4, 5, 5}));
	EXPECT_EQ(multiply(a, b), Tensor({3}, std::vector<double>{4, 10, 18}));
	EXPECT_EQ(sum(a), 6.0);
}

TEST(Tensor, ShapeMismatchIsDimensionError) {
	EXPECT_THROW(add(Tensor({2}), Tensor({3})), DimensionError);
	EXPECT_THROW(subtract(Tensor({2, 1}), Tensor({1, 2})), DimensionError);
}

TEST(Tensor, NonFiniteResultIsError) {
	Tensor a({1}, std::vector<double>{1e308});
	EXPECT_THROW(scale(a, 10.0), NumericError);
}

TEST(Tensor, StackAndSample) {
	Tensor a({2}, std::vector<double>{1, 2}), b({2}, std::vector<double>{3, 4});
	std::vector<Tensor> items{a, b};
	Tensor s = stack(items);
	EXPECT_EQ(s.shape(), (Shape{2, 2}));
	EXPECT_EQ(s.sample(1), b);
}

TEST(Parameter, ZeroGrad) {
	Parameter p("w", Tensor({2, 2}, 1.0));
	EXPECT_EQ(p.grad.shape(), p.value.shape());
	p.grad.fill(3.0);
	p.zero_grad();
	for (double v : p.grad.data())
		EXPECT_EQ(v, 0.0);
}

TEST(GradCheck, Square) {
	Parameter p("theta", Tensor({1}, 3.0));
	Parameter* ptrs[] = {&p};
	auto report = grad_check([&] { return p.value[0] * p.value[0]; }, [&] { p.grad[0] = 2.0 * p.value[0]; }, ptrs);
	EXPECT_EQ(report.entries[0].analytic, 6.0);
	EXPECT_NEAR(report.entries[0].numeric, 6.0, 1e-8);
	EXPECT_TRUE(report.passed());
}

TEST(GradCheck, ConstantFunction) {
	Parameter p("c", Tensor({3}, 1.0));
	Parameter* ptrs[] = {&p};
	auto report = grad_check([] { return 5.0; }, [&] { p.zero_grad(); }, ptrs);
	EXPECT_EQ(report.entries[0].numeric, 0.0);
	EXPECT_EQ(report.entries[0].analytic, 0.0);
	EXPECT_TRUE(report.passed());
}

TEST(GradCheck, DetectsWrongGradient) {
	Parameter p("theta", Tensor({1}, 3.0));
	Parameter* ptrs[] = {&p};
	auto report = grad_check([&] { return p.value[0] * p.value[0]; }, [&] { p.grad[0] = 5.0; }, ptrs);
	EXPECT_FALSE(report.passed());
}

TEST(GradCheck, NonFiniteLossNamesParameter) {
	Parameter p("bad", Tensor({1}, 0.0));
	Parameter* ptrs[] = {&p};
	try {
		grad_check([&] { return std::log(p.value[0] > 0 ? p.value[0] : -1.0); }, [&] { p.grad[0] = 0.0; }, ptrs);
		FAIL() << "expected GradCheckError";
	} catch (const GradCheckError& e) {
		EXPECT_NE(std::string(e.what()).find("bad"), std::string::npos);
	}
}
