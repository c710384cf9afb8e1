import numpy as np
import pytest

import compnet as cn


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_task():
    """Teacher task with three graded pre-trained components."""
    spec = cn.SyntheticTaskSpec(
        n=160,
        d=5,
        m=1,
        true_function="mlp-teacher",
        noise_sd=0.02,
        component_quality=(0.1, 0.2, 0.3),
        seed=42,
    )
    data, comps = cn.generate_synthetic(spec)
    return data, comps


def linear_mix_network(comps, theta=None):
    """Single combine node over the given components."""
    refs = [cn.ComponentRef(f"r{i}", c.id) for i, c in enumerate(comps)]
    k = len(comps)
    if theta is None:
        theta = np.concatenate([[0.0], np.full(k, 1.0 / k)])
    mix = cn.Combine("mix", [r.id for r in refs], np.asarray(theta, dtype=float))
    return cn.CompositeNetwork(refs + [mix], "mix")


def train_columns(data, comps):
    cols = np.column_stack(
        [c.forward(data.inputs[data.train_idx]).ravel() for c in comps]
    )
    return cols, data.labels[data.train_idx].ravel()
