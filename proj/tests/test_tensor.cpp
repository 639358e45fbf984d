#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace bt_test;

TEST(Tensor, LinearIndexIsFirstIndexFastest) {
    Tensor t({2, 3, 4});
    EXPECT_EQ(t.offset(std::vector<std::size_t>{1, 2, 3}), 1 + 2 * 2 + 3 * 6);
    EXPECT_EQ(t.offset(std::vector<std::size_t>{0, 0, 0}), 0u);
    EXPECT_THROW(t.offset(std::vector<std::size_t>{2, 0, 0}), ShapeError);
    EXPECT_THROW(t.offset(std::vector<std::size_t>{0, 0}), ShapeError);
}

TEST(Tensor, RejectsZeroExtentsAndBadLengths) {
    EXPECT_THROW(Tensor({2, 0}), ShapeError);
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
}

TEST(Tensor, MatrixLayoutMatchesTwoWayTensor) {
    Matrix m(2, 3);
    m << 1, 2, 3, 4, 5, 6;
    const Tensor t = Tensor::from_matrix(m);
    EXPECT_EQ(t.at({1, 2}), 6.0);
    EXPECT_EQ(t.at({1, 0}), 4.0);
    EXPECT_EQ(Matrix(t.as_matrix(2, 3)), m);
}

TEST(Tensor, PermuteModesAgainstBruteForce) {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t order = 1 + rng.index(5);
        const Tensor t = random_tensor(random_dims(order, 4, rng), rng);
        std::vector<std::size_t> perm(order);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng.engine());
        const Tensor p = permute_modes(t, perm);
        for (std::size_t i = 0; i < order; ++i) ASSERT_EQ(p.dim(i), t.dim(perm[i]));
        for (const Dims& idx : all_indices(t.dims())) {
            Dims pidx(order);
            for (std::size_t i = 0; i < order; ++i) pidx[i] = idx[perm[i]];
            ASSERT_EQ(p.at(std::span<const std::size_t>(pidx)), t.at(std::span<const std::size_t>(idx)));
        }
        ASSERT_EQ(permute_modes(p, inverse_permutation(perm)), t);
    }
}

TEST(Tensor, PermutationMustBeValid) {
    Tensor t({2, 3});
    EXPECT_THROW(permute_modes(t, {0, 0}), ShapeError);
    EXPECT_THROW(permute_modes(t, {0}), ShapeError);
}

TEST(Tensor, ModeOneUnfoldingSmallExample) {
    // 2x2x2 tensor holding 1..8 in linear order.
    Tensor t({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    Matrix expect(2, 4);
    expect << 1, 3, 5, 7, 2, 4, 6, 8;
    EXPECT_EQ(matricize_mode(t, 0), expect);
    Matrix expect2(2, 4);
    expect2 << 1, 2, 5, 6, 3, 4, 7, 8;
    EXPECT_EQ(matricize_mode(t, 1), expect2);
}

TEST(Tensor, MatricizeAgainstBruteForceAndRoundTrip) {
    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t order = 2 + rng.index(4);
        const Dims dims = random_dims(order, 4, rng);
        const Tensor t = random_tensor(dims, rng);
        std::vector<std::size_t> modes(order);
        std::iota(modes.begin(), modes.end(), 0);
        std::shuffle(modes.begin(), modes.end(), rng.engine());
        const std::size_t split = 1 + rng.index(order - 1);
        IndexPartition p{{modes.begin(), modes.begin() + static_cast<std::ptrdiff_t>(split)},
                         {modes.begin() + static_cast<std::ptrdiff_t>(split), modes.end()}};
        const Matrix m = matricize(t, p);
        for (const Dims& idx : all_indices(dims)) {
            std::size_t r = 0, c = 0, rs = 1, cs = 1;
            for (std::size_t k : p.row_modes) r += idx[k] * rs, rs *= dims[k];
            for (std::size_t k : p.col_modes) c += idx[k] * cs, cs *= dims[k];
            ASSERT_EQ(m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)),
                      t.at(std::span<const std::size_t>(idx)));
        }
        ASSERT_EQ(unmatricize(m, dims, p), t);
    }
}

TEST(Tensor, PartitionValidation) {
    EXPECT_THROW((IndexPartition{{0}, {0, 1}}).validate(2), ShapeError);
    EXPECT_THROW((IndexPartition{{0}, {}}).validate(2), ShapeError);
    EXPECT_NO_THROW((IndexPartition{{1}, {0}}).validate(2));
}

TEST(Tensor, KroneckerSmallExample) {
    Matrix a(2, 2), b(1, 2);
    a << 1, 2, 3, 4;
    b << 0, 5;
    Matrix expect(2, 4);
    expect << 0, 5, 0, 10, 0, 15, 0, 20;
    EXPECT_EQ(kronecker(a, b), expect);
}

TEST(Tensor, KroneckerMixedProductIdentity) {
    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        const auto r = [&] { return static_cast<Eigen::Index>(1 + rng.index(4)); };
        const Eigen::Index m = r(), n = r(), p = r(), q = r(), k = r(), s = r();
        const Matrix a = random_matrix(m, n, rng), b = random_matrix(p, q, rng);
        const Matrix c = random_matrix(n, k, rng), d = random_matrix(q, s, rng);
        ASSERT_LE(rel_err(kronecker(a, b) * kronecker(c, d), kronecker(a * c, b * d)), 1e-12);
    }
}

TEST(Tensor, ReversedKroneckerMatchesVecOfTucker) {
    // vec(G x_1 A_1 ... x_N A_N) = (A_N (x) ... (x) A_1) vec G.
    Rng rng(14);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t order = 1 + rng.index(4);
        const Dims core = random_dims(order, 3, rng);
        const Tensor g = random_tensor(core, rng);
        std::vector<Matrix> f;
        for (std::size_t k = 0; k < order; ++k)
            f.push_back(random_matrix(static_cast<Eigen::Index>(1 + rng.index(4)), static_cast<Eigen::Index>(core[k]), rng));
        const Tensor b = tucker_assemble(g, f);
        const Vector expect = kronecker_reversed(f) * g.vec();
        ASSERT_LE(rel_err(b.vec(), expect), 1e-12);
    }
}

TEST(Tensor, ModeProductAgainstBruteForce) {
    Rng rng(15);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t order = 1 + rng.index(4);
        const Dims dims = random_dims(order, 4, rng);
        const Tensor t = random_tensor(dims, rng);
        const std::size_t n = rng.index(order);
        const Matrix u = random_matrix(static_cast<Eigen::Index>(1 + rng.index(4)), static_cast<Eigen::Index>(dims[n]), rng);
        const Tensor out = mode_n_product(t, u, n);
        for (const Dims& idx : all_indices(out.dims())) {
            double acc = 0.0;
            Dims src = idx;
            for (std::size_t i = 0; i < dims[n]; ++i) {
                src[n] = i;
                acc += u(static_cast<Eigen::Index>(idx[n]), static_cast<Eigen::Index>(i)) * t.at(std::span<const std::size_t>(src));
            }
            ASSERT_NEAR(out.at(std::span<const std::size_t>(idx)), acc, 1e-12);
        }
    }
    Tensor t({2, 3});
    EXPECT_THROW(mode_n_product(t, Matrix::Ones(2, 2), 1), ShapeError);
}

TEST(Tensor, ModeProductMatchesUnfoldingIdentity) {
    // (T x_n U)_(n) = U T_(n).
    Rng rng(16);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t order = 2 + rng.index(3);
        const Dims dims = random_dims(order, 4, rng);
        const Tensor t = random_tensor(dims, rng);
        const std::size_t n = rng.index(order);
        const Matrix u = random_matrix(3, static_cast<Eigen::Index>(dims[n]), rng);
        ASSERT_LE(rel_err(matricize_mode(mode_n_product(t, u, n), n), u * matricize_mode(t, n)), 1e-12);
    }
}

TEST(Tensor, ContractedProductAgainstBruteForce) {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t lead = 1 + rng.index(2), l = 1 + rng.index(2), trail = 1 + rng.index(2);
        const Dims a = random_dims(lead, 3, rng), c = random_dims(l, 3, rng), b = random_dims(trail, 3, rng);
        Dims xd = a, yd = c;
        xd.insert(xd.end(), c.begin(), c.end());
        yd.insert(yd.end(), b.begin(), b.end());
        const Tensor x = random_tensor(xd, rng), y = random_tensor(yd, rng);
        const Tensor z = contracted_product(x, y, l);
        for (const Dims& ia : all_indices(a))
            for (const Dims& ib : all_indices(b)) {
                double acc = 0.0;
                for (const Dims& ic : all_indices(c)) {
                    Dims xi = ia, yi = ic;
                    xi.insert(xi.end(), ic.begin(), ic.end());
                    yi.insert(yi.end(), ib.begin(), ib.end());
                    acc += x.at(std::span<const std::size_t>(xi)) * y.at(std::span<const std::size_t>(yi));
                }
                Dims zi = ia;
                zi.insert(zi.end(), ib.begin(), ib.end());
                ASSERT_NEAR(z.at(std::span<const std::size_t>(zi)), acc, 1e-11);
            }
    }
}

TEST(Tensor, ContractedProductIsMatrixProductForMatrices) {
    Rng rng(18);
    for (int trial = 0; trial < 100; ++trial) {
        const auto m = static_cast<Eigen::Index>(1 + rng.index(6)), k = static_cast<Eigen::Index>(1 + rng.index(6)),
                   n = static_cast<Eigen::Index>(1 + rng.index(6));
        const Matrix a = random_matrix(m, k, rng), b = random_matrix(k, n, rng);
        const Tensor z = contracted_product(Tensor::from_matrix(a), Tensor::from_matrix(b), 1);
        ASSERT_LE(rel_err(z.as_matrix(static_cast<std::size_t>(m), static_cast<std::size_t>(n)), a * b), 1e-12);
    }
    EXPECT_THROW(contracted_product(Tensor({2, 3}), Tensor({4, 2}), 1), ShapeError);
}

TEST(Tensor, FrobeniusAndDifference) {
    Tensor a({2}, {3, 4});
    EXPECT_DOUBLE_EQ(frobenius_norm_sq(a), 25.0);
    EXPECT_EQ((a - a), Tensor({2}));
    EXPECT_THROW(a - Tensor({3}), ShapeError);
}
