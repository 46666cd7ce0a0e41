"""Central-difference gradient oracle shared by the unit and acceptance tests."""

from __future__ import annotations

import numpy as np

from fradiag.nn import ModelSpec, backward, cross_entropy, forward, init


def random_spec(rng: np.random.Generator) -> ModelSpec:
    depth = int(rng.integers(1, 5))
    widths = tuple(int(w) for w in rng.integers(2, 9, depth + 1))
    hidden = list(range(1, depth))
    drop = frozenset(int(i) for i in hidden if rng.random() < 0.4)
    return ModelSpec(
        widths,
        drop,
        dropout_rate=0.3,
        input_scale=float(rng.choice([1.0, 100.0])),
        input_offset=float(rng.choice([0.0, -45.0])),
    )


def max_relative_error(spec: ModelSpec, seed: int, h: float = 1e-4, batch: int = 3) -> float:
    """Largest |analytic - numeric| / max(|analytic| + |numeric|, 1e-8) over all parameters.

    Dropout masks are frozen by re-seeding the generator for every pass. Inputs
    are drawn around the model's input offset and pulled towards it until every
    target probability clears the log clamp, where the loss stops being
    differentiable in the usual sense.
    """
    rng = np.random.default_rng(seed)
    params = init(spec, seed, np.float64)
    for b in params.biases:
        b[:] = rng.normal(0, 0.1, b.shape)
    dev = rng.normal(0, spec.input_scale, (batch, spec.input_width))
    y = rng.integers(0, spec.output_width, batch)

    def loss() -> float:
        _, p = forward(params, spec, x, rng=np.random.default_rng(seed + 1))
        return cross_entropy(p, y)

    while True:
        x = spec.input_offset + dev
        cache, probs = forward(params, spec, x, rng=np.random.default_rng(seed + 1))
        if probs[np.arange(batch), y].min() > 1e-6:
            break
        dev = 0.5 * dev
    grads = backward(params, spec, cache, y)
    worst = 0.0
    for (_, theta), (_, g) in zip(params.tensors(), grads.tensors()):
        flat, gflat = theta.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + h
            up = loss()
            flat[j] = keep - h
            down = loss()
            flat[j] = keep
            num = (up - down) / (2 * h)
            err = abs(gflat[j] - num) / max(abs(gflat[j]) + abs(num), 1e-8)
            worst = max(worst, err)
    return worst
