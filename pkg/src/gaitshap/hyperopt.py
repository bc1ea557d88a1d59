"""Bayesian hyperparameter search: Gaussian-process surrogate with a
squared-exponential kernel and expected-improvement acquisition over a
mixed integer / continuous / optional-dropout space."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import linalg, stats
from scipy.stats import qmc

from .errors import OutOfBounds, SingularKernel
from .nn.model import ModelSpec, StackSpec

log = logging.getLogger(__name__)

MAX_STACKS = 3


@dataclass(frozen=True)
class SearchSpace:
    kind: str = "conv"
    stack_count: tuple = (1, 3)
    units: tuple = (2, 768)
    kernel_size: tuple = (1, 15)
    dropout: tuple = (0.1, 0.9)
    dense_units: tuple = (2, 768)
    head_dropout: tuple = (0.1, 0.9)
    learning_rate: tuple = (1e-5, 1e-2)

    @property
    def has_kernel(self) -> bool:
        return self.kind == "conv"

    @property
    def stack_dims(self) -> int:
        # units, [kernel], dropout-off flag, dropout rate
        return 4 if self.has_kernel else 3

    @property
    def dim(self) -> int:
        return 5 + MAX_STACKS * self.stack_dims


def _unit(x, lo, hi):
    return 0.0 if hi == lo else (x - lo) / (hi - lo)


def _from_unit(u, lo, hi):
    return lo + float(np.clip(u, 0.0, 1.0)) * (hi - lo)


def _check(name, x, lo, hi):
    if not lo <= x <= hi:
        raise OutOfBounds(f"{name}={x} outside [{lo}, {hi}]")


def encode_config(config: dict, space: SearchSpace) -> np.ndarray:
    """Map a configuration onto the unit cube.

    Layout: ``[stack_count, log learning_rate, dense_units, head_dropout_off,
    head_dropout]`` followed, for each of three stack slots, by ``[units,
    kernel_size (conv only), dropout_off, dropout]``. A dropout of ``None``
    sets its ``*_off`` flag to 1. Slots beyond ``stack_count`` are zeros.
    """
    u = np.zeros(space.dim)
    n = int(config["stack_count"])
    _check("stack_count", n, *space.stack_count)
    if len(config["stacks"]) != n:
        raise OutOfBounds("len(stacks) must equal stack_count")
    lr = float(config["learning_rate"])
    _check("learning_rate", lr, *space.learning_rate)
    _check("dense_units", config["dense_units"], *space.dense_units)
    u[0] = _unit(n, *space.stack_count)
    lo, hi = space.learning_rate
    u[1] = _unit(math.log(lr), math.log(lo), math.log(hi))
    u[2] = _unit(config["dense_units"], *space.dense_units)
    u[3:5] = _encode_dropout(config.get("head_dropout"), space.head_dropout, "head_dropout")
    for i, stack in enumerate(config["stacks"]):
        j = 5 + i * space.stack_dims
        _check("units", stack["units"], *space.units)
        u[j] = _unit(stack["units"], *space.units)
        if space.has_kernel:
            _check("kernel_size", stack["kernel_size"], *space.kernel_size)
            u[j + 1] = _unit(stack["kernel_size"], *space.kernel_size)
            j += 1
        u[j + 1:j + 3] = _encode_dropout(stack.get("dropout"), space.dropout, "dropout")
    return u


def _encode_dropout(rate, bounds, name):
    if rate is None:
        return (1.0, 0.0)
    _check(name, rate, *bounds)
    return (0.0, _unit(rate, *bounds))


def _decode_dropout(flag, u, bounds):
    return None if flag >= 0.5 else _from_unit(u, *bounds)


def _int(u, bounds):
    return int(round(_from_unit(u, *bounds)))


def decode_config(u, space: SearchSpace) -> dict:
    """Inverse of :func:`encode_config`; integer dimensions are rounded."""
    u = np.asarray(u, dtype=np.float64)
    n = _int(u[0], space.stack_count)
    lo, hi = space.learning_rate
    config = {
        "stack_count": n,
        "learning_rate": min(max(math.exp(_from_unit(u[1], math.log(lo), math.log(hi))), lo), hi),
        "dense_units": _int(u[2], space.dense_units),
        "head_dropout": _decode_dropout(u[3], u[4], space.head_dropout),
        "stacks": [],
    }
    for i in range(n):
        j = 5 + i * space.stack_dims
        stack = {"units": _int(u[j], space.units)}
        if space.has_kernel:
            stack["kernel_size"] = _int(u[j + 1], space.kernel_size)
            j += 1
        stack["dropout"] = _decode_dropout(u[j + 1], u[j + 2], space.dropout)
        config["stacks"].append(stack)
    return config


def snap(u, space: SearchSpace) -> np.ndarray:
    """Project a unit-cube point onto the lattice of representable configs."""
    return encode_config(decode_config(u, space), space)


def config_to_spec(config: dict, space: SearchSpace, input_shape=(128, 3), pool=2) -> ModelSpec:
    stacks = tuple(
        StackSpec(space.kind, s["units"], s.get("kernel_size") if space.has_kernel else None,
                  pool=pool, dropout=s["dropout"] or 0.0)
        for s in config["stacks"])
    return ModelSpec(tuple(input_shape), stacks, config["dense_units"],
                     head_dropout=config["head_dropout"] or 0.0,
                     learning_rate=config["learning_rate"])


# --------------------------------------------------------------------------
# Gaussian process
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelParams:
    length_scale: float = 0.3
    signal_var: float = 1.0
    noise: float = 1e-6
    prior_mean: Optional[float] = None  # None: mean of the observed values


def se_kernel(A, B, kp: KernelParams):
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    d2 = ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)
    return kp.signal_var * np.exp(-d2 / (2 * kp.length_scale**2))


def _factor(X, kp: KernelParams, jitter=1e-8):
    K = se_kernel(X, X, kp) + (kp.noise + jitter) * np.eye(len(X))
    try:
        return linalg.cho_factor(K, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularKernel(str(exc)) from None


def gp_posterior(X, y, query, kp: KernelParams = KernelParams()):
    """Posterior mean and standard deviation of a GP at ``query`` points.

    The covariance is ``k(a, b) = signal_var * exp(-|a - b|^2 / (2 l^2))`` with
    ``noise`` (plus a 1e-8 jitter) on the diagonal of the training block.
    The returned stddev is that of the latent function (no noise term).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    Q = np.atleast_2d(np.asarray(query, dtype=np.float64))
    mu0 = float(np.mean(y)) if kp.prior_mean is None else kp.prior_mean
    cf = _factor(X, kp)
    Ks = se_kernel(Q, X, kp)
    alpha = linalg.cho_solve(cf, y - mu0)
    mean = mu0 + Ks @ alpha
    v = linalg.solve_triangular(cf[0], Ks.T, lower=True)
    var = np.maximum(kp.signal_var - (v**2).sum(axis=0), 0.0)
    return mean, np.sqrt(var)


def log_marginal_likelihood(X, y, kp: KernelParams) -> float:
    y = np.asarray(y, dtype=np.float64)
    mu0 = float(np.mean(y)) if kp.prior_mean is None else kp.prior_mean
    cf = _factor(X, kp)
    r = y - mu0
    alpha = linalg.cho_solve(cf, r)
    return float(-0.5 * r @ alpha - np.log(np.diag(cf[0])).sum() - 0.5 * len(y) * np.log(2 * np.pi))


def fit_kernel(X, y, length_scales=(0.1, 0.2, 0.4, 0.8, 1.6),
               signal_scales=(0.5, 1.0, 2.0), noises=(1e-6, 1e-3, 1e-2),
               prior_mean=None) -> KernelParams:
    """Grid search of kernel hyperparameters by marginal likelihood."""
    var = float(np.var(y)) or 1.0
    best, best_ll = KernelParams(signal_var=var, prior_mean=prior_mean), -np.inf
    for ls in length_scales:
        for sv in signal_scales:
            for nz in noises:
                kp = KernelParams(ls, sv * var, nz * var, prior_mean)
                try:
                    ll = log_marginal_likelihood(X, y, kp)
                except SingularKernel:
                    continue
                if ll > best_ll:
                    best, best_ll = kp, ll
    return best


def expected_improvement(mean, stddev, best_so_far):
    """EI for maximization; reduces to ``max(mean - best, 0)`` where stddev is 0."""
    mean = np.asarray(mean, dtype=np.float64)
    sd = np.asarray(stddev, dtype=np.float64)
    gain = mean - best_so_far
    safe = np.where(sd > 0, sd, 1.0)
    z = gain / safe
    ei = gain * stats.norm.cdf(z) + sd * stats.norm.pdf(z)
    ei = np.where(sd > 0, ei, np.maximum(gain, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


# --------------------------------------------------------------------------
# optimization loop
# --------------------------------------------------------------------------

@dataclass
class Trial:
    trial_index: int
    config: dict
    objective: float
    duration_s: float = 0.0

    def to_json(self) -> dict:
        obj = self.objective if math.isfinite(self.objective) else None
        return {"trial_index": self.trial_index, "config": self.config,
                "objective": obj, "duration_s": self.duration_s}

    @classmethod
    def from_json(cls, d: dict) -> "Trial":
        obj = -math.inf if d["objective"] is None else float(d["objective"])
        return cls(d["trial_index"], d["config"], obj, d.get("duration_s", 0.0))


def write_trial_log(trials, path) -> None:
    """JSON lines, one trial per line; a failed objective is written as null."""
    with Path(path).open("w") as fh:
        for t in trials:
            fh.write(json.dumps(t.to_json()) + "\n")


def read_trial_log(path) -> list[Trial]:
    lines = Path(path).read_text().splitlines()
    return [Trial.from_json(json.loads(line)) for line in lines if line.strip()]


def _run(objective, config, index):
    t0 = time.perf_counter()
    try:
        score = float(objective(config))
        if math.isnan(score):
            raise ValueError("objective returned NaN")
    except Exception as exc:  # recorded, search continues
        log.warning("trial %d failed: %s", index, exc)
        score = -math.inf
    return Trial(index, config, score, time.perf_counter() - t0)


def _candidates(rng, space, best_u, n):
    # half global uniform, half Gaussian perturbations of the incumbent
    n_local = n // 2 if best_u is not None else 0
    cand = [rng.random((n - n_local, space.dim))]
    if n_local:
        scales = rng.choice([0.02, 0.05, 0.1, 0.2], size=(n_local, 1))
        cand.append(np.clip(best_u + scales * rng.standard_normal((n_local, space.dim)), 0, 1))
    return np.concatenate(cand)


def bayes_optimize(objective: Callable[[dict], float], space: SearchSpace, n_trials=15,
                   n_init=5, seed=0, n_candidates=1024, log_path=None):
    """Maximize ``objective`` over ``space``.

    The first ``n_init`` configurations come from a seeded Latin hypercube;
    each later one maximizes expected improvement under a GP fitted to the
    finite scores so far, over ``n_candidates`` seeded random candidates.
    The GP's constant prior mean is the worst score observed so far, which
    keeps unexplored corners of the cube from looking attractive by default.
    A raising objective is logged with score ``-inf``.

    Returns ``(best_config, trials)``.
    """
    rng = np.random.default_rng(seed)
    init = qmc.LatinHypercube(d=space.dim, seed=rng).random(min(n_init, n_trials))
    trials: list[Trial] = []
    U: list[np.ndarray] = []
    for k in range(n_trials):
        if k < len(init):
            u = snap(init[k], space)
        else:
            fin = [i for i, t in enumerate(trials) if math.isfinite(t.objective)]
            cand = np.array([snap(c, space) for c in _candidates(
                rng, space, U[max(fin, key=lambda i: trials[i].objective)] if fin else None,
                n_candidates)])
            if len(fin) >= 2:
                Xo = np.array([U[i] for i in fin])
                yo = np.array([trials[i].objective for i in fin])
                kp = fit_kernel(Xo, yo, prior_mean=float(yo.min()))
                mean, sd = gp_posterior(Xo, yo, cand, kp)
                ei = expected_improvement(mean, sd, yo.max())
                u = cand[int(np.argmax(ei))]
            else:
                u = cand[0]
        U.append(u)
        trials.append(_run(objective, decode_config(u, space), k))
        log.info("trial %d objective %.4f", k, trials[-1].objective)
    if log_path is not None:
        write_trial_log(trials, log_path)
    best = max(trials, key=lambda t: t.objective)
    return best.config, trials


def random_search(objective, space: SearchSpace, n_trials=15, seed=0):
    """Baseline: uniformly random configurations, same budget."""
    rng = np.random.default_rng(seed)
    trials = [_run(objective, decode_config(rng.random(space.dim), space), k)
              for k in range(n_trials)]
    return max(trials, key=lambda t: t.objective).config, trials
