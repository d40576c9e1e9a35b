#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "pourforce/matrix.hpp"
#include "pourforce/rng.hpp"

using pourforce::Matrix;
using pourforce::Rng;

TEST_CASE("matmul identity returns the operand exactly") {
    Matrix eye(2, 2, {1, 0, 0, 1});
    Matrix a(2, 2, {3, 4, 5, 6});
    Matrix out = pourforce::matmul(eye, a);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(out.data()[i] == a.data()[i]);
}

TEST_CASE("matmul hand product") {
    Matrix a(2, 2, {1, 2, 3, 4});
    Matrix b(2, 1, {5, 6});
    Matrix out = pourforce::matmul(a, b);
    CHECK(out.rows() == 2);
    CHECK(out.cols() == 1);
    CHECK(out(0, 0) == 17.0);
    CHECK(out(1, 0) == 39.0);
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
    Matrix a(2, 3);
    Matrix b(2, 2);
    bool threw = false;
    try {
        pourforce::matmul(a, b);
    } catch (const std::invalid_argument& e) {
        threw = true;
        const std::string msg = e.what();
        CHECK(msg.find("2x3") != std::string::npos);
        CHECK(msg.find("2x2") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("elementwise ops") {
    Matrix a(1, 2, {2, 3});
    Matrix b(1, 2, {4, 5});
    Matrix had = pourforce::hadamard(a, b);
    CHECK(had(0, 0) == 8.0);
    CHECK(had(0, 1) == 15.0);

    Matrix zeros(1, 2);
    Matrix sum = pourforce::add(a, zeros);
    CHECK(sum(0, 0) == a(0, 0));
    CHECK(sum(0, 1) == a(0, 1));

    Matrix nil = pourforce::scale(a, 0.0);
    CHECK(nil(0, 0) == 0.0);
    CHECK(nil(0, 1) == 0.0);

    Matrix c(2, 1);
    CHECK_THROWS_AS(pourforce::add(a, c), std::invalid_argument);
    CHECK_THROWS_AS(pourforce::hadamard(a, c), std::invalid_argument);
}

TEST_CASE("sigmoid and tanh basics") {
    Matrix zero(1, 1);
    CHECK(pourforce::sigmoid(zero)(0, 0) == 0.5);
    CHECK(pourforce::tanh(zero)(0, 0) == 0.0);

    // Stable branch: far-negative input stays finite and positive.
    double tiny = pourforce::sigmoid(-709.0);
    CHECK(std::isfinite(tiny));
    CHECK(tiny > 0.0);
    CHECK(tiny <= 1e-300);
    CHECK(std::isfinite(pourforce::sigmoid(709.0)));

    for (double x = -30.0; x <= 30.0; x += 0.37) {
        double s = pourforce::sigmoid(x) + pourforce::sigmoid(-x);
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("finite in, finite out over random matrices") {
    Rng rng(11);
    for (int it = 0; it < 50; ++it) {
        const int r = rng.uniform_int(1, 8), c = rng.uniform_int(1, 8);
        Matrix a(r, c), b(r, c);
        for (double& v : a.data()) v = rng.uniform(-1e3, 1e3);
        for (double& v : b.data()) v = rng.uniform(-1e3, 1e3);
        CHECK(pourforce::add(a, b).all_finite());
        CHECK(pourforce::hadamard(a, b).all_finite());
        CHECK(pourforce::scale(a, rng.uniform(-10, 10)).all_finite());
        CHECK(pourforce::sigmoid(a).all_finite());
        CHECK(pourforce::tanh(a).all_finite());
        Matrix d(c, rng.uniform_int(1, 8));
        for (double& v : d.data()) v = rng.uniform(-1e3, 1e3);
        CHECK(pourforce::matmul(a, d).all_finite());
    }
}

TEST_CASE("glorot uniform bounds and determinism") {
    Rng rng(42);
    Matrix big = pourforce::glorot_uniform(rng, 100, 100);
    const double bound = std::sqrt(6.0 / 200.0);   // ~0.1732
    for (double v : big.data()) {
        CHECK(v <= bound);
        CHECK(v >= -bound);
    }

    Rng r1(7), r2(7);
    Matrix m1 = pourforce::glorot_uniform(r1, 12, 5);
    Matrix m2 = pourforce::glorot_uniform(r2, 12, 5);
    for (std::size_t i = 0; i < m1.size(); ++i)
        CHECK(m1.data()[i] == m2.data()[i]);

    Rng r3(3);
    Matrix wide = pourforce::glorot_uniform(r3, 1, 5);
    for (double v : wide.data()) {
        CHECK(v <= 1.0);   // sqrt(6/6)
        CHECK(v >= -1.0);
    }
}

TEST_CASE("rng streams are seed-deterministic") {
    Rng a(123456), b(123456);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(1), d(2);
    CHECK(c.next_u64() != d.next_u64());
}

TEST_CASE("format_double round-trips") {
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        double v = rng.uniform(-1e6, 1e6) * std::pow(10.0, rng.uniform_int(-12, 12));
        std::string s = pourforce::format_double(v);
        CHECK(std::stod(s) == v);
    }
}

TEST_CASE("matrix constructor validates size") {
    CHECK_THROWS_AS(Matrix(2, 2, {1.0, 2.0, 3.0}), std::invalid_argument);
    CHECK_THROWS_AS(Matrix(0, 3), std::invalid_argument);
}
