import io
import math

import numpy as np
import pytest

from a2glos.approx import (
    ApproxParams,
    Mlp,
    STANDARD_PARAM_SETS,
    load_mlp,
    mlp_forward,
    p_los_approx,
    params_for_scenario,
    reference_mlp,
    save_mlp,
)
from a2glos.environment import get_scenario


def forward_oracle(mlp: Mlp, delta_h: float) -> float:
    """Scalar re-implementation of the forward pass, no vector ops."""
    x = (delta_h - mlp.input_norm[0]) / (mlp.input_norm[1] - mlp.input_norm[0])
    acc = mlp.output_bias
    for w_in, b_in, w_out in zip(mlp.input_weights, mlp.input_biases, mlp.output_weights):
        acc += w_out / (1.0 + math.exp(-(w_in * x + b_in)))
    return acc * (mlp.output_norm[1] - mlp.output_norm[0]) + mlp.output_norm[0]


class TestParametricModel:
    def test_unity_up_to_breakpoint(self):
        params = ApproxParams(18.0, 63.0)
        for d in (0.0, 1.0, 9.0, 17.999, 18.0):
            assert p_los_approx(d, params) == 1.0

    def test_reference_point(self):
        assert p_los_approx(100.0, ApproxParams(18.0, 63.0)) == pytest.approx(
            0.34767083684423117, rel=1e-12
        )

    def test_vanishes_far_out(self):
        params = ApproxParams(18.0, 63.0)
        assert p_los_approx(1e7, params) < 1e-5
        assert p_los_approx(1e9, params) < 1e-7

    def test_continuous_at_breakpoint_and_decreasing_beyond(self):
        params = ApproxParams(50.0, 120.0)
        just_before = p_los_approx(50.0 - 1e-9, params)
        just_after = p_los_approx(50.0 + 1e-9, params)
        assert just_before == pytest.approx(1.0, abs=1e-12)
        assert just_after == pytest.approx(1.0, abs=1e-9)
        grid = np.linspace(51.0, 5000.0, 500)
        vals = [p_los_approx(d, params) for d in grid]
        assert all(b < a for a, b in zip(vals, vals[1:]))
        assert all(0.0 < v <= 1.0 for v in vals)

    def test_standard_parameter_sets(self):
        assert STANDARD_PARAM_SETS["3gpp"] == ApproxParams(18.0, 63.0)
        assert STANDARD_PARAM_SETS["5gcm"] == ApproxParams(20.0, 66.0)

    def test_invariants(self):
        with pytest.raises(ValueError):
            ApproxParams(0.0, 63.0)
        with pytest.raises(ValueError):
            ApproxParams(18.0, -1.0)
        with pytest.raises(ValueError):
            p_los_approx(-1.0, ApproxParams(18.0, 63.0))


class TestForwardPass:
    def test_all_zero_weights_give_denormalized_bias(self):
        mlp = Mlp((0.0,) * 4, (0.0,) * 4, (0.0,) * 4, 0.25, (0.0, 1000.0), (10.0, 30.0))
        for dh in (0.0, 123.0, 999.0):
            assert mlp_forward(mlp, dh) == pytest.approx(10.0 + 0.25 * 20.0, rel=1e-12)

    def test_saturated_neuron_steps(self):
        mlp = Mlp((1e4,), (-5e3,), (1.0,), 0.0, (0.0, 1000.0), (0.0, 1.0))
        assert mlp_forward(mlp, 100.0) == pytest.approx(0.0, abs=1e-12)  # far below step
        assert mlp_forward(mlp, 900.0) == pytest.approx(1.0, abs=1e-12)  # far above step

    def test_scalar_oracle_on_random_network(self):
        rng = np.random.default_rng(99)
        mlp = Mlp(
            tuple(rng.normal(0, 3, 4)),
            tuple(rng.normal(0, 3, 4)),
            tuple(rng.normal(0, 3, 4)),
            float(rng.normal()),
            (0.0, 500.0),
            (5.0, 800.0),
        )
        for dh in (0.0, 100.0, 250.0, 499.0):
            assert mlp_forward(mlp, dh) == pytest.approx(forward_oracle(mlp, dh), rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            Mlp((), (), (), 0.0, (0.0, 1.0), (0.0, 1.0))
        with pytest.raises(ValueError):
            Mlp((1.0,), (1.0, 2.0), (1.0,), 0.0, (0.0, 1.0), (0.0, 1.0))
        with pytest.raises(ValueError):
            Mlp((1.0,), (1.0,), (1.0,), 0.0, (1.0, 1.0), (0.0, 1.0))


class TestSerialization:
    def test_round_trip_is_lossless(self):
        rng = np.random.default_rng(3)
        mlp = Mlp(
            tuple(rng.normal(0, 10, 4)),
            tuple(rng.normal(0, 1e-7, 4)),
            tuple(rng.normal(0, 1e5, 4)),
            -1.2345678901234567e-12,
            (28.5, 998.5),
            (3.0, 1702.25),
        )
        buf = io.StringIO()
        save_mlp(mlp, buf)
        restored = load_mlp(io.StringIO(buf.getvalue()))
        assert restored == mlp  # dataclass equality: every float identical

    def test_file_round_trip(self, tmp_path):
        mlp = reference_mlp("urban", "d1")
        path = tmp_path / "net.txt"
        save_mlp(mlp, path)
        assert load_mlp(path) == mlp

    def test_missing_tensor_is_an_error(self):
        with pytest.raises(ValueError, match="ob"):
            load_mlp(io.StringIO("iw 1\nib 0\now 1\ninorm 0 1\nonorm 0 1\n"))


class TestReferenceWeights:
    def test_spot_values_match_the_published_table(self):
        assert reference_mlp("suburban", "d1").input_weights[0] == 16.2579
        assert reference_mlp("urban", "d1").output_bias == -1.4798
        assert reference_mlp("dense-urban", "d2").input_biases[3] == 2.9326
        assert reference_mlp("high-rise", "d2").output_bias == -2.6654
        assert reference_mlp("urban", "d2").input_weights == (-13.0707, 8.4525, -1.3332, 7.2757)

    def test_all_scenarios_load(self):
        for name in ("suburban", "urban", "dense-urban", "high-rise"):
            for param in ("d1", "d2"):
                mlp = reference_mlp(name, param)
                assert mlp.hidden_neurons == 4

    def test_unknown_lookups(self):
        with pytest.raises(KeyError):
            reference_mlp("metropolis", "d1")
        with pytest.raises(ValueError):
            reference_mlp("urban", "d3")

    def test_reference_source_warns(self):
        scenario = get_scenario("urban")
        with pytest.warns(UserWarning, match="normalization"):
            params = params_for_scenario(scenario, 100.0, source="reference")
        assert params.d1 > 0.0 and params.d2 > 0.0


class TestParamsForScenario:
    def test_deterministic_via_explicit_models(self):
        scenario = get_scenario("urban")
        pair = (reference_mlp("urban", "d1"), reference_mlp("urban", "d2"))
        a = params_for_scenario(scenario, 250.0, models=pair)
        b = params_for_scenario(scenario, 250.0, models=pair)
        assert a == b

    def test_retrained_source_trains_once_and_caches(self, monkeypatch):
        import a2glos.approx as approx_mod
        import a2glos.fit as fit_mod

        calls = {"n": 0}
        pair = (reference_mlp("urban", "d1"), reference_mlp("urban", "d2"))

        def fake_train_pair(env, *args, **kwargs):
            calls["n"] += 1
            return pair[0], pair[1], None

        monkeypatch.setattr(fit_mod, "train_pair", fake_train_pair)
        monkeypatch.setattr(approx_mod, "_RETRAINED_CACHE", {})
        scenario = get_scenario("urban")
        a = params_for_scenario(scenario, 300.0, source="retrained")
        b = params_for_scenario(scenario, 400.0, source="retrained")
        assert calls["n"] == 1  # second call served from the cache
        assert a.d1 > 0 and b.d1 > 0

    def test_input_validation(self):
        scenario = get_scenario("urban")
        pair = (reference_mlp("urban", "d1"), reference_mlp("urban", "d2"))
        with pytest.raises(ValueError):
            params_for_scenario(scenario, 0.0, models=pair)
        with pytest.raises(ValueError):
            params_for_scenario(scenario, 100.0, source="folklore")
