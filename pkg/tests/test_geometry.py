import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oddforge.errors import ConfigError, DegenerateHullError, DimensionMismatchError
from oddforge.geometry import (
    ConvexPolytope,
    GroundTruthOdd,
    OddPolytope,
    PolynomialInequality,
    build_convex_hull,
    ground_truth_contains,
    ground_truth_from_dict,
    hull_contains,
    odd_polytope_contains,
    polytope_contains,
    relationship_holds,
)
from oracles import in_hull_caratheodory, in_hull_lp

UNIT = ConvexPolytope.box([0, 0], [1, 1])
# x2 - x1 + 3 >= 0
R1 = PolynomialInequality(((1.0, (0, 1)), (-1.0, (1, 0)), (3.0, (0, 0))), "ge")
GT = GroundTruthOdd(OddPolytope((ConvexPolytope.box([-5, -5], [5, 5]),)), (R1,))


@pytest.mark.parametrize(
    "x, expected",
    [((0.5, 0.5), True), ((1.5, 0.5), False), ((1.0, 0.5), True), ((0.0, 0.0), True)],
)
def test_polytope_contains_unit_box(x, expected):
    assert polytope_contains(UNIT, x) is expected


def test_polytope_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        polytope_contains(UNIT, (0.5,))


def test_polytope_rejects_zero_row_and_bad_shapes():
    with pytest.raises(ConfigError):
        ConvexPolytope([[0.0, 0.0]], [1.0])
    with pytest.raises(ConfigError):
        ConvexPolytope([[1.0, 0.0]], [1.0, 2.0])
    with pytest.raises(ConfigError):
        ConvexPolytope(np.empty((0, 2)), [])


def test_polytope_is_immutable():
    with pytest.raises(ValueError):
        UNIT.A[0, 0] = 5.0


def test_odd_polytope_union():
    p = OddPolytope((ConvexPolytope.box([0], [1]), ConvexPolytope.box([2], [3])))
    assert odd_polytope_contains(p, [1.5]) is False
    assert odd_polytope_contains(p, [2.0]) is True
    assert odd_polytope_contains(p, [0.3]) is True
    with pytest.raises(DimensionMismatchError):
        odd_polytope_contains(p, [1.0, 2.0])


def test_singleton_union_matches_polytope():
    single = OddPolytope((UNIT,))
    rng = np.random.default_rng(0)
    for x in rng.uniform(-0.5, 1.5, size=(200, 2)):
        assert odd_polytope_contains(single, x) == polytope_contains(UNIT, x)


def test_odd_polytope_needs_parts_of_equal_dimension():
    with pytest.raises(ConfigError):
        OddPolytope(())
    with pytest.raises(ConfigError):
        OddPolytope((UNIT, ConvexPolytope.box([0], [1])))


def test_relationship_examples():
    assert relationship_holds(R1, (0, 0)) == 1
    assert relationship_holds(R1, (5, 0)) == 0
    assert R1.evaluate((5, 0)) == -2.0
    # boundary counts as satisfied
    assert relationship_holds(R1, (3, 0)) == 1
    le = PolynomialInequality(R1.terms, "le")
    assert relationship_holds(le, (3, 0)) == 1
    assert relationship_holds(le, (0, 0)) == 0


def test_relationship_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        relationship_holds(R1, (1, 2, 3))


def test_polynomial_terms_sorted_and_validated():
    p = PolynomialInequality(((2.0, (1, 0)), (1.0, (0, 2)), (-1.0, (0, 0))))
    assert [t[1] for t in p.terms] == [(0, 0), (0, 2), (1, 0)]
    with pytest.raises(ConfigError):
        PolynomialInequality(((1.0, (-1, 0)),))
    with pytest.raises(ConfigError):
        PolynomialInequality(((1.0, (1, 0)), (1.0, (1,))))
    with pytest.raises(ConfigError):
        PolynomialInequality(((1.0, (1,)),), "gt")


def test_linear_helper_matches_explicit_terms():
    lin = PolynomialInequality.linear([-1.0, 1.0], 3.0)
    assert lin.terms == R1.terms


def test_empty_ontology_is_vacuous():
    gt = GroundTruthOdd(OddPolytope((UNIT,)), ())
    assert ground_truth_contains(gt, (0.5, 0.5))
    assert gt.relationships_hold_many([[9.0, 9.0]]).tolist() == [True]


@pytest.mark.parametrize("x, expected", [((0, 0), True), ((5, 0), False), ((6, 0), False)])
def test_ground_truth_examples(x, expected):
    assert ground_truth_contains(GT, x) is expected


def test_ground_truth_decomposes():
    rng = np.random.default_rng(1)
    pts = rng.uniform(-8, 8, size=(2000, 2))
    for x in pts[:300]:
        expected = GT.taxonomy.contains(x) and all(r.holds(x) == 1 for r in GT.ontology)
        assert ground_truth_contains(GT, x) == expected
    np.testing.assert_array_equal(
        GT.contains_many(pts), GT.taxonomy.contains_many(pts) & R1.holds_many(pts)
    )


def test_ground_truth_dimension_checked():
    with pytest.raises(DimensionMismatchError):
        GroundTruthOdd(OddPolytope((ConvexPolytope.box([0], [1]),)), (R1,))


@given(
    st.integers(min_value=1, max_value=4).flatmap(
        lambda n: st.tuples(
            st.lists(st.lists(st.integers(-5, 5), min_size=n, max_size=n), min_size=1, max_size=5),
            st.lists(st.floats(-3, 3), min_size=n, max_size=n),
            st.integers(0, 4),
        )
    )
)
@settings(max_examples=100, deadline=None)
def test_point_on_facet_is_contained(data):
    rows, x, which = data
    A = np.array(rows, dtype=float)
    A = A[np.any(A != 0, axis=1)]
    if A.shape[0] == 0:
        return
    x = np.array(x)
    # b = A x makes every facet active; x is on all of them.
    b = A @ x
    p = ConvexPolytope(A, b)
    assert polytope_contains(p, x)


def test_union_monotonicity():
    rng = np.random.default_rng(2)
    parts = [ConvexPolytope.box(lo, lo + 1) for lo in rng.uniform(-3, 3, size=(6, 2))]
    pts = rng.uniform(-4, 4, size=(500, 2))
    prev = np.zeros(len(pts), dtype=bool)
    for k in range(1, len(parts) + 1):
        cur = OddPolytope(tuple(parts[:k])).contains_many(pts)
        assert np.all(cur[prev])
        prev = cur


def test_hull_triangle():
    h = build_convex_hull([(0, 0), (1, 0), (0, 1)])
    assert h.facets.A.shape[0] == 3
    assert h.vertices.tolist() == [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]


def test_hull_drops_interior_point():
    pts = [(0, 0), (1, 0), (0, 1), (0.25, 0.25)]
    h = build_convex_hull(pts)
    assert h.facets.A.shape[0] == 3
    assert [0.25, 0.25] not in h.vertices.tolist()
    assert in_hull_caratheodory([(0, 0), (1, 0), (0, 1)], (0.25, 0.25))


def test_hull_membership_examples():
    h = build_convex_hull([(0, 0), (1, 0), (0, 1)])
    assert hull_contains(h, (0.25, 0.25))
    assert not hull_contains(h, (1, 1))
    assert not in_hull_caratheodory([(0, 0), (1, 0), (0, 1)], (1, 1))
    for v in [(0, 0), (1, 0), (0, 1)]:
        assert hull_contains(h, v)
    with pytest.raises(DimensionMismatchError):
        hull_contains(h, (0.1, 0.1, 0.1))


def test_hull_square_merges_coplanar_facets():
    h = build_convex_hull([(0, 0), (1, 0), (0, 1), (1, 1)])
    assert h.facets.A.shape[0] == 4


@pytest.mark.parametrize(
    "pts",
    [
        [(0, 0), (1, 1), (2, 2)],
        [(0, 0), (1, 0)],
        [(1, 1, 1), (2, 2, 2), (0, 1, 0), (1, 2, 1)],  # coplanar in 3-D
    ],
)
def test_hull_degenerate_inputs(pts):
    with pytest.raises(DegenerateHullError):
        build_convex_hull(pts)


def test_hull_one_dimensional():
    h = build_convex_hull([[0.0], [3.0], [1.0]])
    assert hull_contains(h, [3.0]) and hull_contains(h, [0.0])
    assert not hull_contains(h, [3.1])


def test_hull_flat_axis_equality_mode():
    pts = np.array([[0, 5, 0], [1, 5, 0], [0, 5, 1], [1, 5, 1]], dtype=float)
    with pytest.raises(DegenerateHullError):
        build_convex_hull(pts)
    h = build_convex_hull(pts, flat_axes="equality")
    assert hull_contains(h, (0.5, 5, 0.5))
    assert not hull_contains(h, (0.5, 5.1, 0.5))
    assert not hull_contains(h, (1.5, 5, 0.5))


def test_hull_generators_inside_within_tolerance():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(200, 3)) * 1e3
    h = build_convex_hull(pts)
    assert np.all(h.contains_many(pts))
    assert h.tol == pytest.approx(1e-9 * np.abs(pts).max())


@pytest.mark.parametrize("seed", range(10))
def test_hull_matches_caratheodory_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    n = 2 + seed % 2
    m = int(rng.integers(n + 1, 13))
    pts = rng.uniform(-1, 1, size=(m, n))
    h = build_convex_hull(pts)
    probes = rng.uniform(-1.2, 1.2, size=(100, n))
    got = h.contains_many(probes)
    want = np.array([in_hull_caratheodory(pts, p) for p in probes])
    np.testing.assert_array_equal(got, want)
    np.testing.assert_array_equal(got, [in_hull_lp(pts, p) for p in probes])


def test_ground_truth_from_dict():
    spec = {
        "dimension": 2,
        "box": {"lower": [-5, -5], "upper": [5, 5]},
        "relationships": [
            {
                "terms": [
                    {"coeff": 1, "exponents": [0, 1]},
                    {"coeff": -1, "exponents": [1, 0]},
                    {"coeff": 3, "exponents": [0, 0]},
                ],
                "sense": "ge",
            }
        ],
    }
    gt, lo, hi = ground_truth_from_dict(spec)
    assert lo.tolist() == [-5, -5] and hi.tolist() == [5, 5]
    assert gt.contains((0, 0)) and not gt.contains((5, 0)) and not gt.contains((6, 0))


def test_ground_truth_from_dict_with_polytopes():
    spec = {
        "dimension": 1,
        "box": {"lower": [0], "upper": [3]},
        "polytopes": [{"A": [[1], [-1]], "b": [1, 0]}, {"A": [[1], [-1]], "b": [3, -2]}],
    }
    gt, _, _ = ground_truth_from_dict(spec)
    assert gt.contains([0.5]) and gt.contains([2.5]) and not gt.contains([1.5])


def test_ground_truth_from_dict_errors():
    with pytest.raises(ConfigError):
        ground_truth_from_dict({"dimension": 2})
    with pytest.raises(ConfigError):
        ground_truth_from_dict({"dimension": 2, "box": {"lower": [0], "upper": [1]}})
