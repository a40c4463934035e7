import itertools
import json

import numpy as np
import pytest

from ifsmlab import expr
from ifsmlab.examples import cantor_model, gifs_skew_model
from ifsmlab.measure import wasserstein1
from ifsmlab.metric import EUCLIDEAN
from ifsmlab.model import (IfsmModel, MapFamily, ModelError, ParamSpace,
                           WeightFamily, apply_tuples, compose_map,
                           composed_measure, eval_map, load_model,
                           model_from_dict, model_to_dict, save_model,
                           thermo_normalizer_range, validate_model,
                           weight_matrix, weights_at)


def table_weight_cantor():
    """Cantor maps with place-dependent table weights w1 = 1 - x/2, w2 = x/2."""
    doc = {
        "domain": {"dim": 1, "box": [[0.0, 1.0]], "metric": "euclidean"},
        "params": {"atoms": [[0.0], [2.0 / 3.0]], "metric": "euclidean"},
        "maps": {"kind": "affine",
                 "matrices": [[[1.0 / 3.0]], [[1.0 / 3.0]]],
                 "offsets": [[0.0], [2.0 / 3.0]]},
        "weights": {"kind": "table",
                    "expr": {"op": "add", "args": [
                        {"op": "sub", "args": [
                            {"const": 1.0},
                            {"op": "mul", "args": [{"const": 0.5}, {"var": "x0"}]}]},
                        {"op": "mul", "args": [
                            {"op": "mul", "args": [{"const": 1.5}, {"var": "lam0"}]},
                            {"op": "sub", "args": [{"var": "x0"}, {"const": 1.0}]}]}]}},
    }
    # w(x, lam) = (1 - x/2) + 1.5 lam (x - 1): weight 1 - x/2 on the first
    # atom (lam=0) and x/2 on the second (lam=2/3)
    return model_from_dict(doc)


class TestEvalMap:
    def test_cantor_fixed_points(self, cantor):
        assert eval_map(cantor, 0, [0.0])[0] == 0.0
        assert eval_map(cantor, 1, [1.0])[0] == 1.0

    def test_cantor_offset(self, cantor):
        assert eval_map(cantor, 1, [0.0])[0] == pytest.approx(2 / 3, abs=1e-15)

    def test_index_out_of_range(self, cantor):
        with pytest.raises(ModelError):
            eval_map(cantor, 2, [0.0])

    def test_gifs_skew_shift(self, gifs):
        out = eval_map(gifs, 0, [0.5, 0.3])
        assert out[0] == 0.3
        assert out[1] == pytest.approx(0.3 * 0.5 + 0.3 * 0.3, abs=1e-15)

    def test_escape_raises(self):
        escaping = IfsmModel(
            box=np.array([[0.0, 1.0]]),
            metric=EUCLIDEAN,
            params=ParamSpace(np.array([[0.0]]), EUCLIDEAN),
            maps=MapFamily(kind="affine",
                           matrices=np.array([[[1.0]]]),
                           offsets=np.array([[0.5]])),
            weights=WeightFamily(kind="constant", p=np.array([1.0])),
        )
        with pytest.raises(ModelError, match="escapes"):
            eval_map(escaping, 0, [1.0])
        with pytest.raises(ModelError):
            validate_model(escaping)


class TestWeights:
    def test_constant(self, cantor):
        assert weights_at(cantor, [0.37]).weights.tolist() == [0.5, 0.5]

    def test_mixture_convex_combination(self):
        # h(x) = x with point masses on each atom: weights (1-x, x)
        doc = model_to_dict(cantor_model())
        doc["weights"] = {"kind": "mixture", "h": {"var": "x0"}, "lip_h": 1.0,
                          "nu1": [1.0, 0.0], "nu2": [0.0, 1.0]}
        m = model_from_dict(doc)
        assert weights_at(m, [0.25]).weights.tolist() == [0.75, 0.25]

    def test_thermo_zero_potential_uniform(self):
        doc = model_to_dict(cantor_model())
        doc["weights"] = {"kind": "thermodynamic", "potential": {"const": 0.0},
                          "base": [0.5, 0.5], "lip_potential": 0.0}
        m = model_from_dict(doc)
        for x in (0.0, 0.3, 1.0):
            assert weights_at(m, [x]).weights.tolist() == [0.5, 0.5]
        assert thermo_normalizer_range(m, np.linspace(0, 1, 11)[:, None]) == (1.0, 1.0)

    def test_rows_normalized_and_nonnegative(self, mixture, thermo):
        xs = np.linspace(0.0, 1.0, 57)[:, None]
        for model in (mixture, thermo, table_weight_cantor()):
            w = weight_matrix(model, xs)
            assert np.all(w >= 0)
            assert np.max(np.abs(w.sum(axis=1) - 1.0)) <= 1e-12

    def test_mixture_weight_lipschitz_bound(self, mixture):
        # family sensitivity t = Lip(h) * W1(nu1, nu2) on the atom space
        fam = mixture.weights
        nu1 = np.asarray(fam.nu1)
        nu2 = np.asarray(fam.nu2)
        from ifsmlab.measure import DiscreteMeasure
        d_nu = wasserstein1(DiscreteMeasure(mixture.params.atoms, nu1),
                            DiscreteMeasure(mixture.params.atoms, nu2),
                            mixture.params.metric)
        t = fam.lip_h * d_nu
        rng = np.random.default_rng(0)
        for _ in range(40):
            x, y = rng.random(2)
            qx = weights_at(mixture, [x])
            qy = weights_at(mixture, [y])
            d_q = wasserstein1(qx, qy, mixture.params.metric)
            assert d_q <= t * abs(x - y) + 1e-12


class TestCompose:
    def test_empty_tuple_is_identity(self, cantor):
        assert compose_map(cantor, (), [0.4])[0] == 0.4

    def test_two_steps_contracting(self, cantor):
        assert compose_map(cantor, (0, 0), [1.0])[0] == pytest.approx(1 / 9, abs=1e-15)

    def test_first_index_applied_first(self, cantor):
        # map 0 then map 1: tau1(tau0(0)) = tau1(0) = 2/3
        assert compose_map(cantor, (0, 1), [0.0])[0] == pytest.approx(2 / 3, abs=1e-15)

    def test_concatenation_associativity(self, cantor, gifs):
        rng = np.random.default_rng(1)
        for model in (cantor, gifs):
            dim = model.dim
            for _ in range(25):
                t1 = tuple(rng.integers(0, model.n_maps, size=rng.integers(0, 4)))
                t2 = tuple(rng.integers(0, model.n_maps, size=rng.integers(0, 4)))
                x = rng.random(dim)
                via_concat = compose_map(model, t1 + t2, x)
                via_stages = compose_map(model, t2, compose_map(model, t1, x))
                assert np.array_equal(via_concat, via_stages)

    def test_apply_tuples_matches_compose(self, cantor):
        rng = np.random.default_rng(2)
        tuples = rng.integers(0, 2, size=(20, 3))
        x = np.array([0.7])
        batch = apply_tuples(cantor, tuples, x)
        for row, pt in zip(tuples, batch):
            assert np.array_equal(compose_map(cantor, row, x), pt)


class TestComposedMeasure:
    def test_depth_one_equals_weights(self, mixture):
        x = np.array([0.3])
        cm = composed_measure(mixture, 1, x)
        assert np.allclose(cm.weights, weights_at(mixture, x).weights, atol=1e-15)

    def test_constant_weights_give_product_measure(self, cantor):
        cm = composed_measure(cantor, 3, [0.2])
        assert len(cm) == 8
        assert np.allclose(cm.weights, 0.125, atol=1e-15)
        expected = sorted(itertools.product(range(2), repeat=3))
        assert sorted(map(tuple, cm.tuples.tolist())) == expected

    def test_chain_products_match_hand_enumeration(self):
        model = table_weight_cantor()
        x = np.array([0.8])

        def q(pt):
            return weights_at(model, pt).weights

        # oracle: explicit two-step chaining of conditional weights
        expected = {}
        w0 = q(x)
        for j0 in range(2):
            y = eval_map(model, j0, x)
            w1 = q(y)
            for j1 in range(2):
                expected[(j0, j1)] = w0[j0] * w1[j1]
        cm = composed_measure(model, 2, x)
        got = {tuple(t): w for t, w in zip(cm.tuples.tolist(), cm.weights)}
        assert got.keys() == expected.keys()
        for k in expected:
            assert got[k] == pytest.approx(expected[k], abs=1e-15)

    def test_marginal_consistency(self, mixture):
        x = np.array([0.45])
        deep = composed_measure(mixture, 3, x)
        shallow = composed_measure(mixture, 2, x)
        marg = {}
        for t, w in zip(deep.tuples.tolist(), deep.weights):
            marg[tuple(t[:2])] = marg.get(tuple(t[:2]), 0.0) + w
        for t, w in zip(shallow.tuples.tolist(), shallow.weights):
            assert marg[tuple(t)] == pytest.approx(w, abs=1e-12)

    def test_endpoints_match_compositions(self, mixture):
        cm = composed_measure(mixture, 3, [0.9])
        for t, pt in zip(cm.tuples, cm.endpoints):
            assert np.array_equal(compose_map(mixture, t, [0.9]), pt)

    def test_pruning_keeps_only_live_branch(self, h4_violator):
        cm = composed_measure(h4_violator, 4, [0.5], prune_floor=1e-6)
        assert len(cm) == 1
        assert cm.tuples.tolist() == [[0, 0, 0, 0]]
        # the pruned branches carried zero mass, so nothing was renormalized
        assert cm.discarded_mass == 0.0
        assert not cm.renormalized

    def test_pruning_renormalizes_positive_discard(self):
        model = cantor_model(p=(0.9, 0.1))
        cm = composed_measure(model, 3, [0.5], prune_floor=0.05)
        assert cm.discarded_mass > 0
        assert cm.renormalized
        assert cm.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert len(cm) < 8

    def test_tuple_cap(self, cantor):
        with pytest.raises(ModelError, match="cap"):
            composed_measure(cantor, 30, [0.1])


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path, mixture, gifs, thermo):
        for model in (mixture, gifs, thermo, table_weight_cantor()):
            p1 = tmp_path / "m1.json"
            p2 = tmp_path / "m2.json"
            save_model(model, p1)
            loaded = load_model(p1)
            save_model(loaded, p2)
            assert p1.read_bytes() == p2.read_bytes()
            again = load_model(p2)
            assert model_to_dict(again) == model_to_dict(loaded)

    def test_interval_discretization(self):
        doc = {
            "domain": {"dim": 1, "box": [[0.0, 1.0]], "metric": "euclidean"},
            "params": {"interval": [0.0, 1.0], "grid": 5, "metric": "euclidean"},
            "maps": {"kind": "custom",
                     "exprs": [{"op": "mul", "args": [
                         {"op": "add", "args": [{"const": 0.25},
                                                {"op": "mul", "args": [{"const": 0.5},
                                                                       {"var": "lam0"}]}]},
                         {"var": "x0"}]}]},
            "weights": {"kind": "constant", "p": [0.2] * 5},
        }
        m = model_from_dict(doc)
        assert m.params.atoms.ravel().tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
        assert m.params.diameter == 1.0
        # custom map: x -> (0.25 + 0.5 lam) x
        assert eval_map(m, 4, [1.0])[0] == 0.75

    def test_malformed_document(self):
        with pytest.raises(ModelError):
            model_from_dict({"domain": {"dim": 1}})

    def test_duplicate_atoms_rejected(self):
        with pytest.raises(ModelError):
            ParamSpace(np.array([[0.0], [0.0]]), EUCLIDEAN)

    def test_gifs_expansion_rejected(self):
        doc = model_to_dict(gifs_skew_model())
        doc["maps"]["coeffs"] = [[0.7, 0.4], [0.2, 0.2], [0.1, 0.4]]
        with pytest.raises(ModelError, match="below 1"):
            model_from_dict(doc)

    def test_json_is_plain_data(self, mixture):
        text = json.dumps(model_to_dict(mixture), sort_keys=True)
        assert json.loads(text) == model_to_dict(mixture)
