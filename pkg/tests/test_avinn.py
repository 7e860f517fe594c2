import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import circle_points
from vanideal.avinn import (
    Classifier,
    TrainConfig,
    build_layer,
    evaluate_layer_naive,
    fit_avinn,
    fit_class_generators,
    identity_layer,
    predict,
    prune,
    prune_score,
    random_layer_like,
    random_monomial_layer,
    train_head,
    transform,
)
from vanideal.errors import ConfigError, DataError, NumericalError
from vanideal.features import Dataset, synth_manifolds
from vanideal.polycore import Monomial, OrderIdeal, Polynomial, mse
from vanideal.vanishing import GeneratorSet, VanishConfig, fit

EXACT = VanishConfig(psi=1e-10, max_degree=2)


def circles(m=100, noise=0.0, seed=0):
    return synth_manifolds(
        [{"shape": "circle", "radius": 1.0, "count": m}, {"shape": "circle", "radius": 0.5, "count": m}],
        noise=noise,
        seed=seed,
    )


def poly(terms: dict) -> Polynomial:
    return Polynomial.from_terms({Monomial(e): c for e, c in terms.items()})


def gset(polys, label=0, n=2) -> GeneratorSet:
    basis = polys[0].basis
    return GeneratorSet(list(polys), OrderIdeal.initial(n), basis, label)


@pytest.fixture(scope="module")
def circle_sets():
    d = circles()
    return d, fit_class_generators(d, EXACT)


class TestFitClassGenerators:
    def test_concentric_circles(self, circle_sets):
        d, sets = circle_sets
        for k, r in enumerate((1.0, 0.5)):
            (g,) = [g for g in sets[k].generators if g.degree == 2]
            assert np.abs(g.evaluate(circle_points(1000, r, 0.3))).max() <= 1e-5
            c = {m.exponents: v for m, v in g.terms().items()}
            assert c[(0, 0)] == pytest.approx(-(r**2), abs=1e-6)

    def test_single_class_reduces_to_fit(self):
        Z = circle_points(50)
        (gs,) = fit_class_generators(Dataset(Z, np.zeros(50)), EXACT)
        ref = fit(Z, EXACT)
        assert [g.terms() for g in gs.generators] == [g.terms() for g in ref.generators]

    def test_three_lines_own_mse(self):
        psi = 1e-4
        spec = [
            {"shape": "segment", "start": s, "end": e, "count": 60}
            for s, e in [((-1, -1), (1, 1)), ((-1, 1), (1, -1)), ((-1, 0.5), (1, 0.5))]
        ]
        d = synth_manifolds(spec, noise=0.001, seed=0)
        sets = fit_class_generators(d, VanishConfig(psi=psi, max_degree=3, algorithm="oavi-fw"))
        assert len(sets) == 3
        for k, gs in enumerate(sets):
            assert len(gs) > 0
            assert all(mse(g, d.points[d.labels == k]) <= psi for g in gs.generators)

    def test_parallel_matches_serial(self):
        d = circles(200, noise=0.01)
        cfg = VanishConfig(psi=1e-3, max_degree=3, subsample=64, seed=3)
        a = fit_class_generators(d, cfg, workers=1)
        b = fit_class_generators(d, cfg, workers=2)
        assert [[g.terms() for g in s.generators] for s in a] == [[g.terms() for g in s.generators] for s in b]

    def test_empty_class(self):
        d = Dataset(circle_points(10), np.zeros(10))
        with pytest.raises(DataError, match="class 1"):
            fit_class_generators(d, EXACT, n_classes=2)


class TestPruneScore:
    def test_vanishing_everywhere(self):
        p = poly({(1, 0): 1.0})
        pts = [np.c_[np.zeros(5), np.arange(5.0)]] * 3
        assert prune_score(p, 0, pts) == 0.0

    def test_circle_on_small_circle(self):
        p = poly({(2, 0): 1.0, (0, 2): 1.0, (0, 0): -1.0})
        assert prune_score(p, 0, [circle_points(20), circle_points(30, 0.5)]) == pytest.approx(0.75, abs=1e-15)

    def test_min_semantics(self):
        p = poly({(1, 0): 1.0})
        pts = [np.zeros((3, 2)), np.full((4, 2), 0.2), np.full((4, 2), -0.9)]
        assert prune_score(p, 0, pts) == pytest.approx(0.2)

    def test_one_class(self):
        with pytest.raises(ConfigError):
            prune_score(poly({(1, 0): 1.0}), 0, [np.zeros((2, 2))])

    @given(st.permutations(list(range(12))))
    def test_permutation_invariant(self, perm):
        rng = np.random.default_rng(0)
        pts = [rng.standard_normal((12, 2)) for _ in range(3)]
        p = poly({(2, 0): 1.0, (1, 1): -0.5, (0, 0): 0.1})
        shuffled = [P[list(perm)] for P in pts]
        assert prune_score(p, 1, shuffled) == pytest.approx(prune_score(p, 1, pts), rel=1e-14)


class TestPrune:
    def test_identity(self, circle_sets):
        d, sets = circle_sets
        kept, rep = prune(sets, 1.0, d.class_points())
        assert [g.generators for g in kept] == [g.generators for g in sets]
        assert rep.monomials_before == rep.monomials_after

    def test_disjoint_supports(self):
        # x vanishes on class 1 too (score 0), y*y - 1 does not
        pts = [np.c_[np.zeros(4), np.ones(4)], np.c_[np.zeros(4), np.full(4, 0.5)]]
        g_low = poly({(1, 0): 1.0})
        g_high = poly({(0, 2): 1.0, (0, 0): -1.0})
        sets = [gset([g_low, g_high], 0), gset([poly({(0, 1): 1.0, (0, 0): -0.5})], 1)]
        kept, rep = prune(sets, 0.5, pts)
        assert kept[0].generators == [g_high]
        assert rep.retained == [[1], [0]]
        assert rep.monomials_before == 4 and rep.monomials_after == 3
        assert Monomial((1, 0)) not in build_layer(kept).basis

    def test_ceil_and_floor(self):
        pts = [np.zeros((2, 2)), np.ones((2, 2))]
        gens = [poly({(0, 0): float(i + 1)}) for i in range(5)]
        kept, rep = prune([gset(gens, 0), gset(gens[:1], 1)], 0.3, pts)
        assert len(kept[0]) == 2 and len(kept[1]) == 1
        assert rep.retained[0] == [3, 4]

    def test_bad_fraction(self, circle_sets):
        d, sets = circle_sets
        with pytest.raises(ConfigError):
            prune(sets, 0.0, d.class_points())

    @given(st.floats(0.01, 1.0))
    def test_never_grows(self, frac):
        d = circles(60, noise=0.02, seed=1)
        sets = fit_class_generators(d, VanishConfig(psi=1e-3, max_degree=3))
        kept, rep = prune(sets, frac, d.class_points())
        before, after = build_layer(sets), build_layer(kept)
        assert after.n_polys <= before.n_polys and after.n_monomials <= before.n_monomials
        assert rep.monomials_after == after.n_monomials


class TestLayer:
    def test_single_circle(self):
        g = poly({(2, 0): 1.0, (0, 2): 1.0, (0, 0): -1.0})
        layer = build_layer([gset([g])])
        assert layer.coeff_matrix.shape == (1, 3)
        np.testing.assert_array_equal(transform(layer, [0.0, 0.0]), [1.0])

    def test_own_block_zero(self, circle_sets):
        d, sets = circle_sets
        layer = build_layer(sets)
        assert layer.n_polys == len(sets[0]) + len(sets[1])
        for k, (lo, hi) in enumerate(layer.class_offsets):
            F = transform(layer, d.points[d.labels == k])
            assert np.abs(F[:, lo:hi]).max() <= 1e-9
            other = np.delete(F, np.s_[lo:hi], axis=1)
            assert np.all(other.max(axis=1) > 1e-3)

    def test_naive_oracle(self, rng):
        layer = random_monomial_layer(6, 9, 3, 3, seed=1)
        for z in rng.uniform(-1, 1, (20, 3)):
            np.testing.assert_allclose(transform(layer, z), evaluate_layer_naive(layer, z), atol=1e-12)

    def test_zero_point(self, circle_sets):
        _, sets = circle_sets
        layer = build_layer(sets)
        const = layer.coeff_matrix[:, layer.basis.index(Monomial((0, 0)))]
        np.testing.assert_allclose(transform(layer, [0.0, 0.0]), np.abs(const))

    def test_sign_flip(self, rng):
        layer = random_monomial_layer(4, 5, 2, 2, seed=0)
        z = rng.uniform(-1, 1, 2)
        before = transform(layer, z)
        layer.coeff_matrix[2] *= -1
        np.testing.assert_array_equal(transform(layer, z), before)

    def test_dimension_mismatch(self, circle_sets):
        with pytest.raises(DataError):
            transform(build_layer(circle_sets[1]), [0.0, 0.0, 0.0])

    def test_variable_mismatch(self):
        a = gset([poly({(1, 0): 1.0})])
        b = gset([poly({(1, 0, 0): 1.0})], n=3)
        with pytest.raises(DataError):
            build_layer([a, b])


class TestHead:
    def test_separable_exact(self, circle_sets):
        d, sets = circle_sets
        model = train_head(build_layer(sets), d)
        assert np.mean(model.predict(d.points) == d.labels) == 1.0

    def test_lr_zero(self, circle_sets):
        d, sets = circle_sets
        layer = build_layer(sets)
        model = train_head(layer, d, TrainConfig(lr=0.0, finetune_coeffs=True))
        np.testing.assert_array_equal(model.weights, 0)
        np.testing.assert_array_equal(model.bias, 0)
        np.testing.assert_array_equal(model.layer.coeff_matrix, layer.coeff_matrix)

    def test_coefficients_untouched(self, circle_sets):
        d, sets = circle_sets
        layer = build_layer(sets)
        C = layer.coeff_matrix.copy()
        model = train_head(layer, d)
        assert model.layer.coeff_matrix.tobytes() == C.tobytes()
        assert layer.coeff_matrix.tobytes() == C.tobytes()

    def test_finetune_not_worse(self):
        d = circles(200, noise=0.05, seed=2)
        sets = fit_class_generators(d, VanishConfig(psi=1e-2, max_degree=3))
        layer = build_layer(sets)
        head = train_head(layer, d, TrainConfig(seed=1))
        joint = train_head(layer, d, TrainConfig(seed=1, finetune_coeffs=True))
        assert joint.history[-1] <= head.history[-1] + 1e-9
        # support frozen
        np.testing.assert_array_equal(joint.layer.coeff_matrix != 0, layer.coeff_matrix != 0)

    def test_loss_decreases(self, circle_sets):
        d, sets = circle_sets
        h = train_head(build_layer(sets), d, TrainConfig(lr=0.01)).history
        assert h[-1] < h[0]
        assert np.all(np.diff(h) <= 1e-3)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nan_loss(self, circle_sets):
        d, sets = circle_sets
        with pytest.raises(NumericalError, match="loss is nan"):
            train_head(build_layer(sets), d, TrainConfig(lr=1.7e308))

    def test_label_out_of_range(self, circle_sets):
        d, sets = circle_sets
        with pytest.raises(DataError):
            train_head(build_layer(sets), d, n_classes=1)


class TestPredict:
    def test_end_to_end_exact(self):
        d = circles(100)
        res = fit_avinn(d, EXACT, rescale=False)
        assert predict(res.model, [1.0, 0.0]) == 0
        assert predict(res.model, [0.0, 0.5]) == 1

    def test_logit_shift(self, circle_sets, rng):
        d, sets = circle_sets
        m = train_head(build_layer(sets), d)
        shifted = Classifier(m.layer, m.weights, m.bias + 3.7, m.preprocessor)
        Z = rng.uniform(-1, 1, (50, 2))
        np.testing.assert_array_equal(m.predict(Z), shifted.predict(Z))

    def test_tie_goes_to_zero(self, circle_sets):
        layer = build_layer(circle_sets[1])
        m = Classifier(layer, np.zeros((3, layer.n_polys)), np.zeros(3))
        assert predict(m, [0.3, 0.1]) == 0

    def test_dimension_mismatch(self):
        res = fit_avinn(circles(50), EXACT)
        with pytest.raises(DataError):
            predict(res.model, [0.0, 0.0, 0.0])


class TestRandomMonomials:
    def test_shape_match(self, circle_sets):
        ref = build_layer(circle_sets[1])
        layer = random_layer_like(ref, seed=0)
        assert (layer.n_polys, layer.n_monomials, layer.class_sizes) == (
            ref.n_polys,
            ref.n_monomials,
            ref.class_sizes,
        )

    def test_seeds_differ(self):
        a = random_monomial_layer(3, 6, 4, 3, seed=0)
        b = random_monomial_layer(3, 6, 4, 3, seed=1)
        assert list(a.basis) != list(b.basis)
        c = random_monomial_layer(3, 6, 4, 3, seed=0)
        assert list(a.basis) == list(c.basis)
        np.testing.assert_array_equal(a.coeff_matrix, c.coeff_matrix)

    def test_linear_cap(self):
        layer = random_monomial_layer(2, 3, 1, 5, seed=2)
        assert all(m.degree == 1 for m in layer.basis)

    def test_uniform_over_monomials(self):
        # degree <= 2 in 2 variables: 5 monomials, each should be drawn about equally often
        counts = {}
        for s in range(2000):
            (m,) = random_monomial_layer(1, 1, 2, 2, seed=s).basis
            counts[m] = counts.get(m, 0) + 1
        assert len(counts) == 5
        assert max(counts.values()) / min(counts.values()) < 1.3

    def test_identity_layer(self):
        layer = identity_layer(3)
        z = np.array([-0.5, 0.2, 0.9])
        np.testing.assert_array_equal(transform(layer, z), z)
