"""Central finite-difference oracle for the TCN-LSTM parameter gradients."""

from contextlib import contextmanager

import numpy as np

from swhforecast.model import ModelConfig, build_model
from swhforecast.nn import mse_loss
from swhforecast.nn.tensor import Tensor

TINY = dict(channels=4, hidden=4, kernel_size=3, dilations=(1, 2, 4))


@contextmanager
def relu_patterns():
    """Record the on/off pattern of every ReLU evaluated inside the block."""
    seen = []
    original = Tensor.relu

    def recording(self):
        seen.append(self.data > 0)
        return original(self)

    Tensor.relu = recording
    try:
        yield seen
    finally:
        Tensor.relu = original


def max_relative_error(seed, step=1e-5, floor=1e-6, batch=4, lookback=8, n_features=2, min_step=1e-8):
    """Worst relative error between backprop and central differences.

    Dropout is active with a mask stream re-seeded for every evaluation, so
    each loss evaluation sees the same mask.

    A central difference is only an oracle where the loss is smooth on
    ``[p - step, p + step]``. When the two probes switch some ReLU on or off,
    the step is divided by 10 until the patterns agree (down to
    ``min_step``). Entries that still straddle a kink are skipped.

    Returns
    -------
    worst : float
        Largest relative error over the checked entries.
    n_params : int
        Number of parameters in the network.
    kinks : int
        Entries whose step was reduced or that were skipped.
    """
    cfg = ModelConfig(seed=seed, **TINY)
    net = build_model(cfg, (lookback, n_features))
    rng = np.random.default_rng(10_000 + seed)
    X = rng.normal(size=(batch, lookback, n_features))
    y = rng.normal(size=batch)

    def loss(requires_grad):
        mask_rng = np.random.default_rng(seed)
        # fresh BN running stats each call keep evaluations independent
        for bn1, bn2 in net.bn_states:
            for bn in (bn1, bn2):
                bn.running_mean = np.zeros_like(bn.running_mean)
                bn.running_var = np.ones_like(bn.running_var)
        pred, leaves = net.forward(X, training=True, rng=mask_rng, requires_grad=requires_grad)
        return mse_loss(pred, y), leaves

    def probe(P, i, value):
        P[i] = value
        with relu_patterns() as pattern:
            out = float(loss(False)[0].data)
        return out, pattern

    value, leaves = loss(True)
    value.backward()
    worst, kinks = 0.0, 0
    for name, leaf in leaves.items():
        P = net.params[name]
        for i in np.ndindex(P.shape):
            old, h = P[i], step
            while True:
                up, on_up = probe(P, i, old + h)
                down, on_down = probe(P, i, old - h)
                smooth = all(np.array_equal(a, b) for a, b in zip(on_up, on_down))
                if smooth or h / 10 < min_step:
                    break
                h /= 10
            P[i] = old
            kinks += h != step or not smooth
            if not smooth:
                continue
            numeric = (up - down) / (2 * h)
            analytic = leaf.grad[i]
            worst = max(worst, abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor))
    return worst, net.n_params, kinks
