#include <doctest.h>

#include <functional>
#include <random>

#include "oracles.hpp"
#include "vcl/autodiff.hpp"

using namespace vcl;
using ad::Tape;
using ad::Var;

namespace {

using Builder = std::function<Var(Tape&, Var)>;

DenseMatrix run(const Builder& b, const DenseMatrix& x) {
    Tape t;
    return t.value(b(t, t.variable(x)));
}

// Checks reverse- and forward-mode Jacobians of a single-input graph against
// central differences.
void check_op(const Builder& b, const DenseMatrix& x, double tol = 1e-7) {
    const auto shape = run(b, x);
    const auto fd = oracle::central_jacobian(
        [&](const std::vector<double>& v) { return run(b, DenseMatrix(x.rows(), x.cols(), v)).values(); }, x.values(),
        1e-6);

    DenseMatrix rev(shape.size(), x.size()), fwd(shape.size(), x.size());
    for (std::size_t r = 0; r < shape.size(); ++r) {
        Tape t;
        const Var in = t.variable(x);
        const Var out = b(t, in);
        DenseMatrix seed(shape.rows(), shape.cols());
        seed.data()[r] = 1.0;
        t.backward(out, seed);
        const auto g = t.grad(in);
        for (std::size_t c = 0; c < x.size(); ++c) rev(r, c) = g.data()[c];
    }
    for (std::size_t c = 0; c < x.size(); ++c) {
        Tape t;
        const Var in = t.variable(x);
        const Var out = b(t, in);
        DenseMatrix e(x.rows(), x.cols());
        e.data()[c] = 1.0;
        t.set_tangent(in, e);
        t.propagate_tangents();
        const auto d = t.tangent(out);
        for (std::size_t r = 0; r < shape.size(); ++r) fwd(r, c) = d.data()[r];
    }
    CHECK(oracle::rel_frobenius(rev, fd) < tol);
    CHECK(oracle::rel_frobenius(fwd, fd) < tol);
    CHECK(oracle::rel_frobenius(fwd, rev) < 1e-12);
}

}  // namespace

TEST_CASE("tape ops: reverse and forward rules match differences") {
    std::mt19937_64 rng(3);
    const auto x = oracle::random_matrix(3, 4, rng);
    const auto w = oracle::random_matrix(4, 2, rng);
    const auto row = oracle::random_matrix(1, 4, rng);
    const auto g = oracle::random_matrix(1, 4, rng, 0.5, 1.5);

    SUBCASE("matmul") {
        check_op([&](Tape& t, Var v) { return t.matmul(v, t.constant(w)); }, x);
        check_op([&](Tape& t, Var v) { return t.matmul(v, t.transpose(v)); }, x);
    }
    SUBCASE("add, scale, add_row") {
        check_op([&](Tape& t, Var v) { return t.add(t.scale(v, -1.7), t.add_row(v, t.constant(row))); }, x);
        check_op([&](Tape& t, Var v) { return t.add_row(t.constant(x), t.slice_rows(v, 1, 1)); }, x);
    }
    SUBCASE("layer norm") {
        check_op([&](Tape& t, Var v) { return t.layer_norm_rows(v, t.constant(g), t.constant(row), 1e-6); }, x);
        // gamma and beta as the differentiated inputs
        check_op(
            [&](Tape& t, Var v) {
                return t.layer_norm_rows(t.constant(x), t.slice_rows(v, 0, 1), t.slice_rows(v, 1, 1), 1e-6);
            },
            x);
    }
    SUBCASE("softmax and gelu") {
        check_op([&](Tape& t, Var v) { return t.softmax_rows(v); }, x);
        check_op([&](Tape& t, Var v) { return t.gelu(v); }, x);
    }
    SUBCASE("gather, slices, concat, mean") {
        check_op([&](Tape& t, Var v) { return t.gather(v, {11, 0, 5, 5, 3, 7}, 2, 3); }, x);
        check_op(
            [&](Tape& t, Var v) {
                const Var parts[] = {t.slice_cols(v, 2, 2), t.slice_cols(v, 0, 1)};
                const Var rows[] = {t.concat_cols(parts), t.slice_rows(t.concat_cols(parts), 0, 2)};
                return t.concat_rows(rows);
            },
            x);
        check_op([&](Tape& t, Var v) { return t.mean_rows(v); }, x);
    }
    SUBCASE("token im2col") {
        check_op([&](Tape& t, Var v) { return t.im2col_tokens(v, 3); }, x);
        check_op([&](Tape& t, Var v) { return t.im2col_tokens(v, 5); }, x);
        Tape t;
        CHECK_THROWS_AS(t.im2col_tokens(t.variable(x), 2), std::invalid_argument);
    }
    SUBCASE("cross entropy") {
        check_op([&](Tape& t, Var v) { return t.cross_entropy(t.slice_rows(v, 1, 1), 2); }, x);
    }
}

TEST_CASE("im2col builds zero-padded token windows") {
    const auto x = DenseMatrix::from_rows({{1, 10}, {2, 20}, {3, 30}});
    Tape t;
    const auto& p = t.value(t.im2col_tokens(t.constant(x), 3));
    REQUIRE(p.rows() == 3);
    REQUIRE(p.cols() == 6);
    CHECK(p.row(0)[0] == 0.0);
    CHECK(p.row(0)[2] == 1.0);
    CHECK(p.row(0)[5] == 20.0);
    CHECK(p.row(1)[0] == 1.0);
    CHECK(p.row(2)[4] == 0.0);
}

TEST_CASE("gradients accumulate over shared uses and constants stay inert") {
    Tape t;
    const Var x = t.variable(DenseMatrix::from_rows({{2.0}}));
    const Var c = t.constant(DenseMatrix::from_rows({{3.0}}));
    const Var y = t.add(t.matmul(x, x), t.matmul(x, c));  // x² + 3x
    t.backward(y);
    CHECK(t.grad(x)(0, 0) == doctest::Approx(7.0));
    CHECK(t.grad(c)(0, 0) == 0.0);
}
