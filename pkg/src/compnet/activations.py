"""Activation functions for components and composite nodes.

Each activation knows its value and derivative, and -- where a smooth
inverse exists around the expansion point -- the inverse map with its
first two derivatives.  The inverse data is what the scaled-combiner
construction consumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_TAGS = ("linear", "logistic", "scaled-logistic", "tanh", "relu")


class ActivationError(ValueError):
    pass


@dataclass(frozen=True)
class Activation:
    """An elementwise activation, optionally parameterized.

    ``scale`` and ``out_range`` only matter for ``scaled-logistic``,
    which evaluates 2*out_range / (1 + exp(-z/scale)) - out_range.
    """

    tag: str
    scale: float = 1.0
    out_range: float = 1.0

    def __post_init__(self):
        if self.tag not in _TAGS:
            raise ActivationError(f"unknown activation tag {self.tag!r}")
        if self.tag == "scaled-logistic" and (self.scale <= 0 or self.out_range <= 0):
            raise ActivationError("scaled-logistic needs positive scale and range")

    @property
    def a3_compliant(self) -> bool:
        """Smooth enough for the scaled-combiner construction.

        relu is excluded: its derivative is discontinuous at 0.
        """
        return self.tag != "relu"

    @property
    def expansion_point(self) -> float:
        """Point where the derivative is maximal (0 for every preset)."""
        return 0.0

    @property
    def taylor_radius(self) -> float:
        """Half-width of the interval around the expansion point used
        when bounding the inverse's curvature."""
        if self.tag == "scaled-logistic":
            return self.scale
        return 1.0

    def value(self, z):
        z = np.asarray(z, dtype=float)
        if self.tag == "linear":
            return z
        if self.tag == "logistic":
            return _expit(z)
        if self.tag == "tanh":
            return np.tanh(z)
        if self.tag == "scaled-logistic":
            # 2R*expit(z/s) - R, written via tanh for symmetry about 0
            return self.out_range * np.tanh(z / (2.0 * self.scale))
        return np.maximum(z, 0.0)

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        if self.tag == "linear":
            return np.ones_like(z)
        if self.tag == "logistic":
            s = _expit(z)
            return s * (1.0 - s)
        if self.tag == "tanh":
            t = np.tanh(z)
            return 1.0 - t * t
        if self.tag == "scaled-logistic":
            s = _expit(z / self.scale)
            return (2.0 * self.out_range / self.scale) * s * (1.0 - s)
        return (z > 0).astype(float)

    def centered_value(self, delta):
        """value(z0 + delta) - value(z0), computed without cancellation.

        Needed when the scaled combiner drives the activation with tiny
        offsets around the expansion point.
        """
        delta = np.asarray(delta, dtype=float)
        if self.tag == "linear":
            return delta
        if self.tag == "logistic":
            return 0.5 * np.tanh(0.5 * delta)
        if self.tag == "tanh":
            return np.tanh(delta)
        if self.tag == "scaled-logistic":
            return self.out_range * np.tanh(delta / (2.0 * self.scale))
        return np.maximum(delta, 0.0)

    # Inverse map tau around the expansion point, with derivatives.

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        if self.tag == "linear":
            return y
        if self.tag == "logistic":
            return np.log(y / (1.0 - y))
        if self.tag == "tanh":
            return np.arctanh(y)
        if self.tag == "scaled-logistic":
            return 2.0 * self.scale * np.arctanh(y / self.out_range)
        raise ActivationError("relu has no smooth inverse")

    def inverse_d1(self, y):
        y = np.asarray(y, dtype=float)
        if self.tag == "linear":
            return np.ones_like(y)
        if self.tag == "logistic":
            return 1.0 / (y * (1.0 - y))
        if self.tag == "tanh":
            return 1.0 / (1.0 - y * y)
        if self.tag == "scaled-logistic":
            r = self.out_range
            return 2.0 * self.scale * r / (r * r - y * y)
        raise ActivationError("relu has no smooth inverse")

    def inverse_d2(self, y):
        y = np.asarray(y, dtype=float)
        if self.tag == "linear":
            return np.zeros_like(y)
        if self.tag == "logistic":
            return 1.0 / (1.0 - y) ** 2 - 1.0 / y**2
        if self.tag == "tanh":
            return 2.0 * y / (1.0 - y * y) ** 2
        if self.tag == "scaled-logistic":
            r = self.out_range
            return 4.0 * self.scale * r * y / (r * r - y * y) ** 2
        raise ActivationError("relu has no smooth inverse")

    @property
    def label(self) -> str:
        """Short label used in construction reports."""
        return {
            "linear": "L",
            "scaled-logistic": "SL",
            "logistic": "Sigm",
            "tanh": "Tanh",
            "relu": "Relu",
        }[self.tag]

    def to_dict(self) -> dict:
        d = {"tag": self.tag}
        if self.tag == "scaled-logistic":
            d["scale"] = float(self.scale)
            d["range"] = float(self.out_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Activation":
        if d["tag"] == "scaled-logistic":
            return cls("scaled-logistic", scale=float(d["scale"]), out_range=float(d["range"]))
        return cls(d["tag"])


def _expit(z):
    # exp only ever sees non-positive arguments
    ez = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))


LINEAR = Activation("linear")
LOGISTIC = Activation("logistic")
TANH = Activation("tanh")
RELU = Activation("relu")

# Fixed wide preset used by the construction experiments:
# S(z) = 2000/(1+exp(-z/500)) - 1000, i.e. slope 1 at the origin.
SL = Activation("scaled-logistic", scale=500.0, out_range=1000.0)


def scaled_logistic(scale: float, out_range: float) -> Activation:
    return Activation("scaled-logistic", scale=scale, out_range=out_range)


def parse_activation(token: str) -> Activation:
    """Parse a CLI token such as 'linear', 'sl', or 'scaled-logistic:500:1000'."""
    t = token.strip().lower()
    if t in ("l", "linear"):
        return LINEAR
    if t == "sl":
        return SL
    if t in ("logistic", "sigm", "sigmoid"):
        return LOGISTIC
    if t == "tanh":
        return TANH
    if t == "relu":
        return RELU
    if t.startswith("scaled-logistic"):
        parts = t.split(":")
        if len(parts) == 3:
            return scaled_logistic(float(parts[1]), float(parts[2]))
    raise ActivationError(f"cannot parse activation token {token!r}")
