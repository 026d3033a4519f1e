import json

import numpy as np
import pytest

import gelkit as gk
from gelkit.errors import NegativeRate, SchemaError


def vec(pi0, plus, par=()):
    return gk.TypeVector(pi0, tuple(plus), tuple(par))


class TestKernel:
    def test_multiplicative_masses(self, mult):
        sys_, _ = mult
        rate = gk.merge_rate(sys_, vec(2, [2.0]), vec(3, [3.0]))
        assert rate == 6.0

    def test_kinetic_same_velocity_is_zero(self, kac):
        sys_, _ = kac
        v = (0.3, -0.2, 0.9)
        e = sum(c * c for c in v)
        x = vec(1, [1.0, e], v)
        assert gk.merge_rate(sys_, x, x) == 0.0

    def test_kinetic_opposite_unit_speed(self, kac):
        sys_, _ = kac
        x = vec(1, [1.0, 1.0], (1.0, 0.0, 0.0))
        y = vec(1, [1.0, 1.0], (-1.0, 0.0, 0.0))
        assert gk.merge_rate(sys_, x, y) == 4.0

    def test_symmetry_is_bitwise(self, kac):
        sys_, _ = kac
        x = vec(1, [1.1, 0.37], (0.21, -0.53, 0.11))
        y = vec(2, [0.9, 2.41], (-0.77, 0.13, 0.59))
        assert gk.merge_rate(sys_, x, y) == gk.merge_rate(sys_, y, x)

    def test_reflection_invariance_bitwise(self, kac):
        sys_, _ = kac
        x = vec(1, [1.3, 0.7], (0.4, -0.1, 0.25))
        y = vec(1, [0.8, 1.9], (-0.6, 0.33, -0.45))
        assert gk.merge_rate(sys_, gk.reflect(x), gk.reflect(y)) == gk.merge_rate(
            sys_, x, y
        )

    def test_rate_matrix_matches_scalar(self, kac):
        sys_, meas = kac
        coords = meas.coords
        mat = gk.merge_rate_matrix(sys_, coords, coords)
        for i, (xi, _) in enumerate(meas.items()):
            for j, (xj, _) in enumerate(meas.items()):
                assert mat[i, j] == pytest.approx(
                    gk.merge_rate(sys_, xi, xj), abs=1e-12
                )

    def test_negative_rate_raises(self):
        sys_ = gk.BilinearSystem(1, 1, [[1.0]], [[-4.0]])
        x = vec(1, [1.0], (1.0,))
        with pytest.raises(NegativeRate):
            gk.merge_rate(sys_, x, x)


class TestTypeVector:
    def test_merge_sums_componentwise(self):
        x = vec(1, [1.0, 2.0], (0.5,))
        y = vec(3, [0.25, 1.0], (-0.5,))
        z = gk.merge(x, y)
        assert z.pi0 == 4
        assert z.plus == (1.25, 3.0)
        assert z.par == (0.0,)

    def test_reflect_is_involution(self):
        x = vec(2, [1.0], (0.3, -0.7))
        assert gk.reflect(gk.reflect(x)) == x
        assert gk.reflect(x).plus == x.plus

    def test_total_size(self):
        assert gk.total_size(vec(2, [1.5, 0.5], (9.0,))) == 4.0

    def test_invalid_vectors(self):
        with pytest.raises(ValueError):
            vec(0, [1.0])
        with pytest.raises(ValueError):
            vec(1, [-0.5])

    def test_as_array_layout(self):
        x = vec(2, [1.0, 3.0], (-0.5,))
        assert np.array_equal(x.as_array(), [2.0, 1.0, 3.0, -0.5])


class TestSystemValidation:
    def test_asymmetric_matrix_rejected(self):
        with pytest.raises(ValueError):
            gk.BilinearSystem(2, 0, [[1.0, 0.5], [0.2, 1.0]], [])

    def test_negative_plus_entry_rejected(self):
        with pytest.raises(ValueError):
            gk.BilinearSystem(1, 0, [[-1.0]], [])

    def test_zero_row_rejected(self):
        with pytest.raises(ValueError):
            gk.BilinearSystem(2, 0, [[1.0, 0.0], [0.0, 0.0]], [])
        with pytest.raises(ValueError):
            gk.BilinearSystem(1, 1, [[1.0]], [[0.0]])

    def test_block_layout(self, kac):
        sys_, _ = kac
        assert sys_.block.shape == (5, 5)
        assert np.array_equal(sys_.block[:2, :2], sys_.a_plus)
        assert np.array_equal(sys_.block[2:, 2:], sys_.a_par)
        assert np.all(sys_.block[:2, 2:] == 0.0)

    def test_default_coordinate_names(self):
        sys_ = gk.BilinearSystem(2, 1, [[0.0, 1.0], [1.0, 0.0]], [[-1.0]])
        assert sys_.coordinate_names[0] == "absorbed"
        assert len(sys_.coordinate_names) == 4


class TestAtomicMeasure:
    def test_duplicate_atoms_rejected(self):
        a = vec(1, [1.0])
        with pytest.raises(ValueError):
            gk.AtomicMeasure((a, a), (0.5, 0.5))

    def test_nonpositive_weight_rejected(self):
        with pytest.raises(ValueError):
            gk.AtomicMeasure((vec(1, [1.0]),), (0.0,))

    def test_empty_measure_moments_are_zero(self):
        empty = gk.AtomicMeasure((), ())
        assert empty.total_mass == 0.0
        assert gk.moment_matrix(empty, [0], [0]) == np.zeros((1, 1))

    def test_empty_measure_has_no_layout(self):
        empty = gk.AtomicMeasure((), ())
        with pytest.raises(ValueError):
            empty.coords

    def test_scaled_drops_zeroed_atoms(self, bidi):
        _, meas = bidi
        thinned = meas.scaled([1.0, 0.0])
        assert len(thinned.atoms) == 1
        assert thinned.total_mass == pytest.approx(0.5)

    def test_moment_anchors(self, mult):
        _, meas = mult
        assert gk.gram_plus(meas) == np.ones((1, 1))
        assert np.array_equal(gk.first_moments(meas), [1.0, 1.0])

    def test_kinetic_gram(self, kac):
        _, meas = kac
        q = gk.gram_plus(meas)
        # energy moments of the two-speed quadrature: <e> = 3, <e^2> = 15
        assert np.allclose(q, [[1.0, 3.0], [3.0, 15.0]], atol=1e-12)

    def test_par_bound_constant(self, kac):
        _, meas = kac
        assert gk.par_bound_constant(meas) > 0.0


class TestHypotheses:
    def test_kinetic_passes_all(self, kac):
        sys_, meas = kac
        rep = gk.check_hypotheses(sys_, meas)
        assert rep.all_pass
        assert not rep.point_mass
        assert rep.components == 1

    def test_monodisperse_passes_with_point_mass_flag(self, mult):
        sys_, meas = mult
        rep = gk.check_hypotheses(sys_, meas)
        assert rep.all_pass
        assert rep.point_mass

    def test_mirror_asymmetry_detected(self):
        sys_ = gk.BilinearSystem(1, 1, [[1.0]], [[-0.5]])
        meas = gk.AtomicMeasure((vec(1, [1.0], (0.7,)),), (1.0,))
        rep = gk.check_hypotheses(sys_, meas)
        assert not rep.mirror_symmetric
        assert not rep.all_pass

    def test_absorbed_count_above_one_detected(self):
        sys_ = gk.BilinearSystem(1, 0, [[1.0]], [])
        meas = gk.AtomicMeasure(
            (vec(1, [1.0]), vec(2, [2.0])), (0.5, 0.5), initial=False
        )
        rep = gk.check_hypotheses(sys_, meas)
        assert not rep.unit_absorbed_count

    def test_disconnected_support_detected(self):
        sys_ = gk.BilinearSystem(2, 0, [[1.0, 0.0], [0.0, 1.0]], [])
        meas = gk.AtomicMeasure(
            (vec(1, [1.0, 0.0]), vec(1, [0.0, 1.0])), (0.5, 0.5)
        )
        rep = gk.check_hypotheses(sys_, meas)
        assert rep.components == 2
        assert not rep.irreducible

    def test_degenerate_gram_detected(self):
        sys_ = gk.BilinearSystem(2, 0, [[1.0, 1.0], [1.0, 1.0]], [])
        meas = gk.AtomicMeasure(
            (vec(1, [1.0, 1.0]), vec(1, [2.0, 2.0])), (0.5, 0.5)
        )
        rep = gk.check_hypotheses(sys_, meas)
        assert not rep.gram_nondegenerate

    def test_empty_measure_rejected(self, mult):
        sys_, _ = mult
        with pytest.raises(ValueError):
            gk.check_hypotheses(sys_, gk.AtomicMeasure((), ()))


class TestJson:
    def test_round_trip(self, kac):
        sys_, meas = kac
        doc = gk.system_measure_to_json(sys_, meas)
        sys2, meas2 = gk.system_measure_from_json(doc)
        assert sys2.n == sys_.n and sys2.m == sys_.m
        assert np.array_equal(sys2.block, sys_.block)
        assert np.array_equal(meas2.coords, meas.coords)
        assert np.array_equal(meas2.weight_array, meas.weight_array)

    def test_missing_key_pointer(self):
        with pytest.raises(SchemaError) as err:
            gk.system_measure_from_json({"n": 1})
        assert err.value.pointer == "/m"

    def test_atom_pointer(self):
        doc = {
            "n": 1,
            "m": 0,
            "A_plus": [[1.0]],
            "A_par": [],
            "atoms": [{"pi0": 1, "plus": [1.0], "par": [], "w": 1.0},
                      {"pi0": "x", "plus": [2.0], "par": [], "w": 1.0}],
        }
        with pytest.raises(SchemaError) as err:
            gk.system_measure_from_json(doc)
        assert err.value.pointer.startswith("/atoms/1")

    def test_bad_number_pointer(self):
        doc = {"n": 1, "m": 0, "A_plus": [["x"]], "A_par": [], "atoms": []}
        with pytest.raises(SchemaError) as err:
            gk.system_measure_from_json(doc)
        assert "/A_plus" in err.value.pointer

    def test_load_system_missing_file(self, tmp_path):
        with pytest.raises(SchemaError):
            gk.load_system(tmp_path / "nope.json")

    def test_load_system_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(SchemaError):
            gk.load_system(path)

    def test_bundled_configs_load(self):
        from gelkit.configs import path_for

        for name in ("multiplicative", "bidisperse", "kac"):
            sys_, meas = gk.load_system(path_for(name))
            assert meas.total_mass > 0.0
        with pytest.raises(FileNotFoundError):
            path_for("missing")


class TestPresets:
    def test_from_name_rejects_unknown(self):
        with pytest.raises(ValueError):
            gk.from_name("nope")

    def test_kinetic_sample_is_mirrored(self):
        sys_, meas = gk.kinetic_gas_sample(6, seed=3)
        rep = gk.check_hypotheses(sys_, meas)
        assert rep.mirror_symmetric
        assert len(meas.atoms) == 12

    def test_sample_atoms_shape(self, bidi):
        _, meas = bidi
        rows = gk.sample_atoms(meas, 17, np.random.default_rng(0))
        assert rows.shape == (17, 2)
        assert set(rows[:, 1]) <= {1.0, 2.0}
