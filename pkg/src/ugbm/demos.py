"""Monte Carlo experiments on split-gain bias."""

from __future__ import annotations

import dataclasses

import numpy as np

from .booster import GBMConfig, fit
from .data import synth_example1
from .importance import gain_importance, refit_validation_gain, split_unbiased_gain, unbiased_gain
from .loss import LossKind, grad_hess
from .splitter import Mode, classic_gain

EXAMPLE1_CONFIG = GBMConfig(mode=Mode.CLASSIC, n_estimators=50, learning_rate=0.05, max_leaves=31)


def bias_trials(n: int, trials: int, seed: int = 0) -> np.ndarray:
    """Classic gain of a median split on a feature independent of the target.

    Each trial draws y ~ N(0, 1) with the prediction at 0 under squared error,
    so g = -y and h = 1, plus an independent uniform feature split at its
    median. The expected gain is 1 / (2n).
    """
    if n < 2 or trials < 1:
        raise ValueError("need n >= 2 and trials >= 1")
    rng = np.random.default_rng(seed)
    out = np.empty(trials)
    for t in range(trials):
        y = rng.standard_normal(n)
        x = rng.random(n)
        g = -y
        left = x <= np.median(x)
        GL, GR = g[left].sum(), g[~left].sum()
        HL, HR = float(left.sum()), float((~left).sum())
        out[t] = classic_gain((GL, HL), (GR, HR), (GL + GR, HL + HR), n)
    return out


def example1_trials(repetitions: int, n: int, seed: int = 0, config: GBMConfig = EXAMPLE1_CONFIG):
    """Gain and unbiased-gain importances of X1..X3 over independent repetitions.

    Returns two arrays of shape (repetitions, 3). Each repetition trains a
    classic model on a fresh draw and evaluates unbiased gain on a second,
    independent draw of the same size.
    """
    config = dataclasses.replace(config, mode=Mode.CLASSIC)
    gains = np.empty((repetitions, 3))
    unbiased = np.empty((repetitions, 3))
    for r in range(repetitions):
        rng = np.random.default_rng([seed, r])
        train = synth_example1(n, rng)
        oob = synth_example1(n, rng)
        model = fit(train, dataclasses.replace(config, seed=(seed + r) % 2**64))
        gains[r] = gain_importance(model).values
        unbiased[r] = unbiased_gain(model, oob, repeats=1, seed=r).values
    return gains, unbiased


def _node_sample(rng, m: int, loss: LossKind):
    x = rng.random(m)
    if loss == LossKind.SQUARED_ERROR:
        y = rng.standard_normal(m)
        pred = np.zeros(m)
    else:
        z = rng.standard_normal(m)
        y = (rng.random(m) < 1.0 / (1.0 + np.exp(-z))).astype(np.float64)
        # a stale prediction that only loosely tracks the target
        pred = 0.8 * z + 0.3
    gh = grad_hess(loss, pred, y)
    return x, gh.g, gh.h


def independent_split_trials(
    trials: int, n: int = 100, loss: LossKind = LossKind.SQUARED_ERROR, seed: int = 0, min_leaf: int = 5
) -> np.ndarray:
    """Per-split importance estimates for a split on a feature independent of y.

    Each trial draws a node of n training rows, picks the classic-gain-best
    threshold on a uniform feature that carries no signal, then draws n fresh
    held-out rows. Columns of the result: unbiased gain with equal-size
    subsampling, the same estimator using every held-out row, the held-out
    refit loss reduction, and the in-sample classic gain.
    """
    loss = LossKind(loss)
    if n < 2 * min_leaf or trials < 1:
        raise ValueError("need n >= 2 * min_leaf and trials >= 1")
    rng = np.random.default_rng(seed)
    out = np.empty((trials, 4))
    for t in range(trials):
        x, g, h = _node_sample(rng, n, loss)
        order = np.argsort(x, kind="stable")
        gs = np.cumsum(g[order])[:-1]
        hs = np.cumsum(h[order])[:-1]
        G, H = g.sum(), h.sum()
        s = gs**2 / hs + (G - gs) ** 2 / (H - hs) - G**2 / H
        lo, hi = min_leaf - 1, n - min_leaf
        i = lo + int(np.argmax(s[lo:hi]))
        threshold = 0.5 * (x[order[i]] + x[order[i + 1]])
        left = x <= threshold
        xo, go, ho = _node_sample(rng, n, loss)
        left_o = xo <= threshold
        held = ((go, ho), (go[left_o], ho[left_o]), (go[~left_o], ho[~left_o]))
        GL, GR = g[left].sum(), g[~left].sum()
        ek = split_unbiased_gain(G, GL, GR, n, *held, rng=rng)
        ak = split_unbiased_gain(G, GL, GR, n, *held, rng=rng, equal_k=False)
        sums = ((G, H), (GL, h[left].sum()), (GR, h[~left].sum()))
        out[t] = (
            0.0 if ek is None else ek,
            0.0 if ak is None else ak,
            refit_validation_gain(sums, *held, n_total=n),
            s[i] / (2 * n),
        )
    return out
