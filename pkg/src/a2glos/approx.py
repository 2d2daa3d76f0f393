"""Parametric LoS probability model with network-generated parameters.

The 3GPP-style two-parameter model

    P(d) = min(D1/d, 1) * (1 - exp(-d/D2)) + exp(-d/D2)

is exact to 1 up to the breakpoint distance D1 and decays with constant D2
beyond it. To make (D1, D2) altitude-dependent, a single-hidden-layer
network maps the transceiver height difference to each parameter. Networks
retrained against the analytic model (see the `fit` module) are the default
source; a set of reference weight tables for the four standard scenarios is
also bundled, but their original normalization convention is unknown, so
their outputs are best-effort only and flagged with a warning.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .environment import ScenarioPreset

__all__ = [
    "ApproxParams",
    "Mlp",
    "STANDARD_PARAM_SETS",
    "REFERENCE_NORM_RANGE",
    "mlp_forward",
    "p_los_approx",
    "params_for_scenario",
    "reference_mlp",
    "save_mlp",
    "load_mlp",
]


@dataclass(frozen=True)
class ApproxParams:
    """Breakpoint distance D1 and decay distance D2 [m]."""

    d1: float
    d2: float

    def __post_init__(self) -> None:
        if not self.d1 > 0.0:
            raise ValueError(f"d1 must be > 0, got {self.d1}")
        if not self.d2 > 0.0:
            raise ValueError(f"d2 must be > 0, got {self.d2}")


#: Land-mobile parameter sets recommended by the standard channel models.
STANDARD_PARAM_SETS: dict[str, ApproxParams] = {
    "3gpp": ApproxParams(d1=18.0, d2=63.0),
    "5gcm": ApproxParams(d1=20.0, d2=66.0),
}


def p_los_approx(d_rx: float, params: ApproxParams) -> float:
    """Parametric LoS probability at horizontal distance d_rx [m].

    Exactly 1 for d_rx <= D1 (the d_rx = 0 value is the limit 1), then
    strictly decreasing towards 0.
    """
    if d_rx < 0.0:
        raise ValueError(f"d_rx must be >= 0, got {d_rx}")
    if d_rx <= params.d1:
        return 1.0  # breakpoint region (covers the d_rx = 0 limit)
    tail = math.exp(-d_rx / params.d2)
    return (params.d1 / d_rx) * (1.0 - tail) + tail


@dataclass(frozen=True)
class Mlp:
    """One-input, one-output network with a single sigmoid hidden layer.

    Input and target are min-max normalized to [0, 1]; the normalization
    ranges travel with the weights. The output activation is the identity,
    so predictions are unbounded before de-normalization.
    """

    input_weights: tuple[float, ...]  # hidden weight per neuron
    input_biases: tuple[float, ...]
    output_weights: tuple[float, ...]
    output_bias: float
    input_norm: tuple[float, float]  # (min, max) of the raw input
    output_norm: tuple[float, float]  # (min, max) of the raw target

    def __post_init__(self) -> None:
        j = len(self.input_weights)
        if j < 1:
            raise ValueError("network needs at least one hidden neuron")
        if len(self.input_biases) != j or len(self.output_weights) != j:
            raise ValueError("weight/bias lengths disagree")
        for lo, hi in (self.input_norm, self.output_norm):
            if not hi > lo:
                raise ValueError(f"degenerate normalization range ({lo}, {hi})")

    @property
    def hidden_neurons(self) -> int:
        return len(self.input_weights)


def mlp_forward(mlp: Mlp, delta_h: float) -> float:
    """Evaluate the network at a height difference delta_h [m]."""
    in_lo, in_hi = mlp.input_norm
    x = (delta_h - in_lo) / (in_hi - in_lo)
    z = np.asarray(mlp.input_weights) * x + np.asarray(mlp.input_biases)
    with np.errstate(over="ignore"):  # saturated sigmoid: exp overflow -> 0
        hidden = 1.0 / (1.0 + np.exp(-z))
    y = float(np.dot(mlp.output_weights, hidden)) + mlp.output_bias
    out_lo, out_hi = mlp.output_norm
    return y * (out_hi - out_lo) + out_lo


# --- plain-text serialization -------------------------------------------

_TAGS = ("iw", "ib", "ow", "ob", "inorm", "onorm")


def save_mlp(mlp: Mlp, path: str | Path | IO[str]) -> None:
    """Write a network as one `tag v1 v2 ...` line per tensor."""

    def fmt(values: Iterable[float]) -> str:
        return " ".join(f"{v:.17g}" for v in values)

    lines = [
        f"iw {fmt(mlp.input_weights)}",
        f"ib {fmt(mlp.input_biases)}",
        f"ow {fmt(mlp.output_weights)}",
        f"ob {fmt([mlp.output_bias])}",
        f"inorm {fmt(mlp.input_norm)}",
        f"onorm {fmt(mlp.output_norm)}",
    ]
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        Path(path).write_text(text)


def load_mlp(path: str | Path | IO[str]) -> Mlp:
    """Read a network written by :func:`save_mlp`."""
    if hasattr(path, "read"):
        text = path.read()
    else:
        text = Path(path).read_text()
    fields: dict[str, tuple[float, ...]] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tag, *values = line.split()
        if tag not in _TAGS:
            raise ValueError(f"unknown tensor tag {tag!r}")
        fields[tag] = tuple(float(v) for v in values)
    missing = [t for t in _TAGS if t not in fields]
    if missing:
        raise ValueError(f"model file lacks tensors: {', '.join(missing)}")
    (ob,) = fields["ob"]
    return Mlp(
        input_weights=fields["iw"],
        input_biases=fields["ib"],
        output_weights=fields["ow"],
        output_bias=ob,
        input_norm=(fields["inorm"][0], fields["inorm"][1]),
        output_norm=(fields["onorm"][0], fields["onorm"][1]),
    )


# --- bundled reference weight tables ------------------------------------

#: Normalization range assumed when evaluating the reference tables. Their
#: original convention was never published; (0, 1000) m covers the height
#: differences and distances the scenarios were characterised over.
REFERENCE_NORM_RANGE = (0.0, 1000.0)

# Per scenario, per parameter: 4 hidden weights, 4 hidden biases,
# output weight, output bias.
_REFERENCE_WEIGHTS: dict[str, dict[str, dict[str, tuple[float, ...] | float]]] = {
    "suburban": {
        "d1": {
            "iw": (16.2579, -5.5254, 15.4283, 9.6738),
            "ib": (-3.0018, -1.3995, -0.8644, 1.0262),
            "ow": (5.1456,),
            "ob": -6.6230,
        },
        "d2": {
            "iw": (6.5142, -10.6197, -3.9213, -0.6352),
            "ib": (-0.2573, 0.7117, -2.7229, -1.4552),
            "ow": (3.1422,),
            "ob": -2.8366,
        },
    },
    "urban": {
        "d1": {
            "iw": (-1.6587, 5.1759, 9.1645, 4.9191),
            "ib": (-1.2296, -3.2076, -1.7848, -3.1057),
            "ow": (3.4246,),
            "ob": -1.4798,
        },
        "d2": {
            "iw": (-13.0707, 8.4525, -1.3332, 7.2757),
            "ib": (2.8829, -0.5461, -1.9083, 0.1436),
            "ow": (4.1644,),
            "ob": -7.8225,
        },
    },
    "dense-urban": {
        "d1": {
            "iw": (2.4455, -3.5892, 2.5314, 5.2872),
            "ib": (-2.7575, -0.8322, -2.7720, -1.3142),
            "ow": (3.9771,),
            "ob": -2.3955,
        },
        "d2": {
            "iw": (4.6853, 0.3355, 5.7374, -7.3002),
            "ib": (-0.1744, -0.8997, 0.3100, 2.9326),
            "ow": (3.1653,),
            "ob": -6.7432,
        },
    },
    "high-rise": {
        "d1": {
            "iw": (1.2291, -0.3727, 3.0045, -0.7202),
            "ib": (-1.7200, -1.1132, -2.1148, -1.0177),
            "ow": (2.6658,),
            "ob": -1.9291,
        },
        "d2": {
            "iw": (-2.3706, 6.1472, 1.0547, 3.8038),
            "ib": (1.1160, -0.8216, 1.6107, -0.3733),
            "ow": (1.3593,),
            "ob": -2.6654,
        },
    },
}


def reference_mlp(scenario_name: str, parameter: str) -> Mlp:
    """Bundled reference network for a scenario and parameter ('d1'/'d2').

    The hidden weights and biases are shipped verbatim. Each table carries
    a single output weight, read here as shared across the hidden neurons,
    and the normalization ranges are this package's convention (see
    REFERENCE_NORM_RANGE), so outputs are indicative, not ground truth.
    """
    from .environment import canonical_name

    wanted = canonical_name(scenario_name)
    for name, params in _REFERENCE_WEIGHTS.items():
        if canonical_name(name) == wanted:
            break
    else:
        raise KeyError(f"no reference weights for scenario {scenario_name!r}")
    if parameter not in ("d1", "d2"):
        raise ValueError(f"parameter must be 'd1' or 'd2', got {parameter!r}")
    w = params[parameter]
    hidden = tuple(w["iw"])
    return Mlp(
        input_weights=hidden,
        input_biases=tuple(w["ib"]),
        output_weights=(float(w["ow"][0]),) * len(hidden),
        output_bias=float(w["ob"]),
        input_norm=REFERENCE_NORM_RANGE,
        output_norm=REFERENCE_NORM_RANGE,
    )


# Cache of locally retrained (d1, d2) network pairs, keyed by scenario name.
_RETRAINED_CACHE: dict[str, tuple[Mlp, Mlp]] = {}


def params_for_scenario(
    scenario: ScenarioPreset,
    delta_h: float,
    source: str = "retrained",
    models: tuple[Mlp, Mlp] | None = None,
) -> ApproxParams:
    """(D1, D2) for a scenario at a given height difference.

    Args:
        scenario: preset carrying the area statistics.
        delta_h: transceiver height difference [m], > 0.
        source: "retrained" runs the locally trained network pair
            (training on first use, cached per scenario); "reference" runs
            the bundled reference tables and emits a UserWarning because
            their normalization convention is assumed, not known.
        models: optional explicit (d1 net, d2 net) pair overriding both
            sources.

    Predictions are floored at 1 mm to keep the parameter invariants even
    under extreme extrapolation.
    """
    if not delta_h > 0.0:
        raise ValueError(f"delta_h must be > 0, got {delta_h}")
    if models is not None:
        pair = models
    elif source == "reference":
        warnings.warn(
            "reference weight tables evaluated under an assumed normalization "
            "convention; outputs are best-effort",
            UserWarning,
            stacklevel=2,
        )
        pair = (reference_mlp(scenario.name, "d1"), reference_mlp(scenario.name, "d2"))
    elif source == "retrained":
        pair = _retrained_pair(scenario)
    else:
        raise ValueError(f"source must be 'retrained' or 'reference', got {source!r}")
    d1 = max(mlp_forward(pair[0], delta_h), 1e-3)
    d2 = max(mlp_forward(pair[1], delta_h), 1e-3)
    return ApproxParams(d1=d1, d2=d2)


def _retrained_pair(scenario: ScenarioPreset) -> tuple[Mlp, Mlp]:
    key = scenario.name
    if key not in _RETRAINED_CACHE:
        from . import fit  # deferred: fit depends on this module

        mlp_d1, mlp_d2, _ = fit.train_pair(scenario.env)
        _RETRAINED_CACHE[key] = (mlp_d1, mlp_d2)
    return _RETRAINED_CACHE[key]
