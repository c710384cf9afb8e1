"""Data plumbing: imputation, interpolation, synthetic tasks, CSV."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import compnet as cn


def _brute_force_impute(grid, k):
    """Independent oracle: all-pairs distances, explicit stable sort."""
    out = grid.copy()
    known = [(r, c) for r in range(grid.shape[0]) for c in range(grid.shape[1])
             if np.isfinite(grid[r, c])]
    for r in range(grid.shape[0]):
        for c in range(grid.shape[1]):
            if np.isfinite(grid[r, c]):
                continue
            ranked = sorted(known, key=lambda rc: ((rc[0] - r) ** 2 + (rc[1] - c) ** 2, rc))
            out[r, c] = float(np.mean([grid[rc] for rc in ranked[:k]]))
    return out


class TestKnnImpute:
    def test_constant_grid(self):
        g = np.full((4, 4), np.nan)
        g[0, 0] = g[0, 3] = g[3, 0] = g[3, 3] = 5.0
        out = cn.knn_impute(g, k=4)
        np.testing.assert_array_equal(out, np.full((4, 4), 5.0))

    def test_four_equidistant_neighbors(self):
        g = np.full((3, 3), np.nan)
        g[0, 1], g[1, 0], g[1, 2], g[2, 1] = 1.0, 2.0, 3.0, 4.0
        assert cn.knn_impute(g, k=4)[1, 1] == 2.5

    def test_matches_brute_force_oracle_on_random_grids(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            g = rng.normal(size=(5, 5))
            mask = rng.random((5, 5)) < 0.4
            g[mask] = np.nan
            if np.isfinite(g).sum() < 4:
                continue
            np.testing.assert_array_equal(cn.knn_impute(g, k=4), _brute_force_impute(g, 4))

    def test_too_few_known_cells(self):
        g = np.full((3, 3), np.nan)
        g[0, 0] = 1.0
        with pytest.raises(cn.DataError, match="known"):
            cn.knn_impute(g, k=4)

    def test_idempotent_once_filled(self, rng):
        g = rng.normal(size=(6, 6))
        g[1, 2] = g[4, 4] = np.nan
        filled = cn.knn_impute(g, k=4)
        np.testing.assert_array_equal(cn.knn_impute(filled, k=4), filled)

    def test_spec_shape_validation(self):
        spec = cn.GridSpec(rows=3, cols=4)
        with pytest.raises(cn.DataError, match="shape"):
            cn.knn_impute(np.zeros((2, 2)), spec)

    def test_station_rasterization_averages_colocated(self):
        spec = cn.GridSpec(
            rows=2, cols=2, stations=[(0, 0, "a"), (0, 0, "b"), (1, 1, "c")]
        )
        grid = cn.rasterize_stations(spec, {"a": 1.0, "b": 3.0, "c": 7.0})
        assert grid[0, 0] == 2.0 and grid[1, 1] == 7.0
        assert np.isnan(grid[0, 1]) and np.isnan(grid[1, 0])


class TestInterpolateTime:
    def test_six_hour_to_hourly(self):
        np.testing.assert_array_equal(
            cn.interpolate_time(np.array([0.0, 6.0])), np.arange(7.0)
        )

    def test_constant_series(self):
        out = cn.interpolate_time(np.full(3, 2.5))
        np.testing.assert_array_equal(out, np.full(13, 2.5))

    def test_ticks_preserved_exactly_and_midpoints_average(self, rng):
        v = rng.normal(size=6)
        out = cn.interpolate_time(v, step=2)
        for i in range(6):
            assert out[2 * i] == v[i]
        for i in range(5):
            assert out[2 * i + 1] == (v[i] + v[i + 1]) / 2.0

    def test_single_tick_warns(self):
        with pytest.warns(UserWarning, match="single"):
            out = cn.interpolate_time(np.array([4.0]))
        np.testing.assert_array_equal(out, [4.0])

    def test_two_dimensional_series(self, rng):
        v = rng.normal(size=(4, 3))
        out = cn.interpolate_time(v, step=6)
        assert out.shape == (19, 3)
        np.testing.assert_array_equal(out[::6], v)

    @given(seed=st.integers(0, 5000), step=st.integers(1, 8))
    @settings(max_examples=25, deadline=None)
    def test_tick_preservation_property(self, seed, step):
        v = np.random.default_rng(seed).normal(size=5)
        out = cn.interpolate_time(v, step=step)
        assert out.size == 4 * step + 1
        np.testing.assert_array_equal(out[::step], v)


class TestGenerateSynthetic:
    def test_graded_quality_losses_strictly_increase(self):
        spec = cn.SyntheticTaskSpec(
            n=120, d=4, m=1, noise_sd=0.0, component_quality=(0.1, 0.2, 0.3), seed=3
        )
        data, comps = cn.generate_synthetic(spec)
        losses = [cn.component_loss(c, data, "train") for c in comps]
        assert losses[0] < losses[1] < losses[2]
        # unit-RMS perturbations make the training loss exactly quality^2
        np.testing.assert_allclose(losses, [0.01, 0.04, 0.09], rtol=1e-9)

    def test_outputs_always_pass_assumption_checks(self):
        for seed in range(5):
            spec = cn.SyntheticTaskSpec(
                n=80, d=4, m=1, component_quality=(0.1, 0.25), seed=seed
            )
            data, comps = cn.generate_synthetic(spec)
            cols = np.column_stack(
                [c.forward(data.inputs[data.train_idx]).ravel() for c in comps]
            )
            rep = cn.check_assumptions(cols, data.labels[data.train_idx].ravel())
            assert rep.a1.holds and rep.a2.holds

    def test_perfect_component_exhausts_retries(self):
        spec = cn.SyntheticTaskSpec(
            n=50, d=3, m=1, true_function="linear", noise_sd=0.0,
            component_quality=(0.0,), seed=1,
        )
        with pytest.raises(cn.DataError, match="A1/A2|retries"):
            cn.generate_synthetic(spec, max_retries=5)

    def test_seed_determinism(self):
        spec = cn.SyntheticTaskSpec(n=60, d=3, m=2, component_quality=(0.2, 0.4), seed=9)
        d1, c1 = cn.generate_synthetic(spec)
        d2, c2 = cn.generate_synthetic(spec)
        np.testing.assert_array_equal(d1.inputs, d2.inputs)
        np.testing.assert_array_equal(d1.labels, d2.labels)
        for a, b in zip(c1, c2):
            assert a.to_dict() == b.to_dict()

    def test_sum_of_experts_and_linear_teachers(self):
        for teacher in ("linear", "sum-of-experts"):
            spec = cn.SyntheticTaskSpec(
                n=64, d=4, m=1, true_function=teacher, component_quality=(0.2, 0.3), seed=2
            )
            data, comps = cn.generate_synthetic(spec)
            assert len(comps) == 2
            assert all(c.kind == cn.KIND_PRETRAINED for c in comps)

    def test_task_spec_config_roundtrip(self, tmp_path):
        spec = cn.SyntheticTaskSpec(
            n=77, d=5, m=2, true_function="linear", noise_sd=0.125,
            component_quality=(0.1, 0.35), seed=4,
        )
        path = tmp_path / "task.spec"
        cn.save_task_spec(spec, path)
        assert cn.load_task_spec(path) == spec


class TestCsv:
    def test_roundtrip_bit_identical(self, tmp_path, rng):
        data = cn.Dataset(
            rng.normal(size=(2, 3)), rng.normal(size=(2, 1)), np.array([0]), np.array([1])
        )
        p = tmp_path / "d.csv"
        cn.save_csv(p, data)
        again = cn.load_csv(p, ["x1", "x2", "x3"], ["y1"])
        np.testing.assert_array_equal(again.inputs, data.inputs)
        np.testing.assert_array_equal(again.labels, data.labels)
        np.testing.assert_array_equal(again.train_idx, data.train_idx)
        p2 = tmp_path / "d2.csv"
        cn.save_csv(p2, again)
        assert p.read_bytes() == p2.read_bytes()

    def test_nan_cell_names_row(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("x1,y1\n1.0,2.0\n3.0,NaN\n")
        with pytest.raises(cn.DataError, match=r"rows: \[3\]"):
            cn.load_csv(p, ["x1"], ["y1"])

    def test_missing_columns(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(cn.DataError, match="missing columns"):
            cn.load_csv(p, ["x1"], ["y1"])

    def test_parse_failure_names_line(self, tmp_path):
        p = tmp_path / "p.csv"
        p.write_text("x1,y1\n1.0,2.0\nfoo,3.0\n")
        with pytest.raises(cn.DataError, match="line 3"):
            cn.load_csv(p, ["x1"], ["y1"])

    def test_large_roundtrip_loss_agreement(self, tmp_path):
        spec = cn.SyntheticTaskSpec(n=1000, d=4, m=1, component_quality=(0.2,), seed=6)
        data, comps = cn.generate_synthetic(spec)
        p = tmp_path / "big.csv"
        cn.save_csv(p, data)
        again = cn.load_csv(p, [f"x{i + 1}" for i in range(4)], ["y1"])
        net = cn.single_component_network(comps[0].id)
        reg = cn.registry(comps)
        a = cn.loss_l2(net, reg, data, "train")
        b = cn.loss_l2(net, reg, again, "train")
        assert a == pytest.approx(b, abs=1e-12)

    def test_grid_csv_roundtrip(self, tmp_path, rng):
        g = rng.normal(size=(4, 5))
        g[1, 2] = np.nan
        p = tmp_path / "g.csv"
        cn.save_grid_csv(p, g)
        back = cn.load_grid_csv(p)
        np.testing.assert_array_equal(np.isnan(back), np.isnan(g))
        np.testing.assert_array_equal(back[np.isfinite(back)], g[np.isfinite(g)])
