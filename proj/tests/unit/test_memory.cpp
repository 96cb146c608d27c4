#include <doctest.h>

#include <cmath>
#include <vector>

#include "mgce/memory_bank.hpp"
#include "support/instances.hpp"

using namespace mgce;

TEST_CASE("init normalizes rows and validates gamma") {
  MatrixX<double> f(2, 2);
  f << 3, 4, 1, 0;
  MemoryBank<double> bank(f, 0.2);
  CHECK(bank.rows()(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(bank.rows()(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(bank.rows()(1, 0) == 1.0);

  MatrixX<double> unit(2, 2);
  unit << 1, 0, 0, 1;
  MemoryBank<double> ubank(unit, 0.2);
  CHECK(ubank.rows() == unit);

  CHECK_THROWS_WITH_AS(MemoryBank<double>(f, 1.5), doctest::Contains("gamma_out_of_range"), Error);
  MatrixX<double> zero(1, 2);
  zero << 0, 0;
  CHECK_THROWS_WITH_AS(MemoryBank<double>(zero, 0.2), doctest::Contains("zero_row"), Error);
}

TEST_CASE("gamma=0 update leaves the bank bitwise unchanged") {
  Rng rng(21);
  const auto f = testing::random_unit_features(rng, 10, 5);
  MemoryBank<double> bank(f, 0.0);
  const MatrixX<double> before = bank.rows();
  const auto batch = testing::random_unit_features(rng, 4, 5);
  const std::vector<Index> ids{1, 3, 5, 7};
  bank.update(ids, batch);
  CHECK(bank.rows() == before);
}

TEST_CASE("gamma=1 update replaces rows with the normalized batch feature") {
  Rng rng(22);
  const auto f = testing::random_unit_features(rng, 6, 4);
  MemoryBank<double> bank(f, 1.0);
  const auto batch = testing::random_unit_features(rng, 2, 4);
  const std::vector<Index> ids{0, 4};
  bank.update(ids, batch);
  CHECK((bank.rows().row(0) - l2_normalize(batch).row(0)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((bank.rows().row(4) - l2_normalize(batch).row(1)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(bank.rows().row(1) == l2_normalize(f).row(1));  // untouched row
}

TEST_CASE("gamma=0.5 blend matches the hand-computed value") {
  MatrixX<double> f(1, 2);
  f << 1, 0;
  MemoryBank<double> bank(f, 0.5);
  MatrixX<double> batch(1, 2);
  batch << 0, 1;
  const std::vector<Index> ids{0};
  bank.update(ids, batch);
  const double expected = std::sqrt(0.5);
  CHECK(std::abs(bank.rows()(0, 0) - expected) <= 1e-12);
  CHECK(std::abs(bank.rows()(0, 1) - expected) <= 1e-12);
}

TEST_CASE("update validates indices") {
  Rng rng(23);
  const auto f = testing::random_unit_features(rng, 5, 3);
  MemoryBank<double> bank(f, 0.2);
  const auto batch = testing::random_unit_features(rng, 2, 3);
  CHECK_THROWS_WITH_AS(bank.update(std::vector<Index>{0, 5}, batch),
                       doctest::Contains("index_out_of_range"), Error);
  CHECK_THROWS_WITH_AS(bank.update(std::vector<Index>{2, 2}, batch),
                       doctest::Contains("duplicate_index"), Error);
  CHECK_THROWS_WITH_AS(bank.update(std::vector<Index>{0}, batch),
                       doctest::Contains("shape_mismatch"), Error);
}

TEST_CASE("snapshot is a value copy") {
  Rng rng(24);
  MatrixX<double> f(4, 3);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 3; ++j) f(i, j) = rng.next_gaussian();
  MemoryBank<double> bank(f, 0.5);
  CHECK(bank.snapshot() == l2_normalize(f));

  const auto snap = bank.snapshot();
  const auto batch = testing::random_unit_features(rng, 2, 3);
  bank.update(std::vector<Index>{1, 2}, batch);
  CHECK(snap == l2_normalize(f));  // unaffected by the update

  const auto snap2 = bank.snapshot();
  CHECK(snap2.row(0) == snap.row(0));
  CHECK(snap2.row(3) == snap.row(3));
  CHECK(snap2.row(1) != snap.row(1));
  CHECK(snap2.row(2) != snap.row(2));
}

TEST_CASE("rows stay unit-norm under many random updates") {
  Rng rng(25);
  const auto f = testing::random_unit_features(rng, 32, 8);
  MemoryBank<double> bank(f, 0.2);
  for (int rep = 0; rep < 1000; ++rep) {
    const Index i = static_cast<Index>(rng.next_below(32));
    bank.update(std::vector<Index>{i}, testing::random_unit_features(rng, 1, 8));
  }
  for (Index i = 0; i < 32; ++i) CHECK(std::abs(bank.rows().row(i).norm() - 1.0) <= 1e-6);
}

TEST_CASE("updates commute across disjoint index sets") {
  Rng rng(26);
  const auto f = testing::random_unit_features(rng, 8, 4);
  const auto bi = testing::random_unit_features(rng, 1, 4);
  const auto bj = testing::random_unit_features(rng, 1, 4);

  MemoryBank<double> first(f, 0.3), second(f, 0.3);
  first.update(std::vector<Index>{2}, bi);
  first.update(std::vector<Index>{6}, bj);
  second.update(std::vector<Index>{6}, bj);
  second.update(std::vector<Index>{2}, bi);
  CHECK(first.rows() == second.rows());
}
