"""Two-layer binary classifier: tanh hidden layer, softmax over two outputs.

Training minimizes mean cross-entropy with Polak-Ribiere conjugate
gradients (strong-Wolfe line search, Armijo backtracking as fallback),
random re-initializations, and validation-based early stopping.
"""

from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from scipy.optimize import line_search

MAGIC = b"PNMLP001"
_HEADER = struct.Struct("<8sII")


@dataclass(frozen=True, eq=False)
class Network:
    w1: np.ndarray  # (H, D)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (2, H)
    b2: np.ndarray  # (2,)

    def __post_init__(self):
        h, d = np.shape(self.w1)
        if np.shape(self.b1) != (h,) or np.shape(self.w2) != (2, h) or np.shape(self.b2) != (2,):
            raise ValueError(
                f"inconsistent shapes w1{np.shape(self.w1)} b1{np.shape(self.b1)} "
                f"w2{np.shape(self.w2)} b2{np.shape(self.b2)}"
            )
        for name in ("w1", "b1", "w2", "b2"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite weights in {name}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def n_params(self) -> int:
        return self.hidden_dim * (self.input_dim + 3) + 2

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2.ravel(), self.b2])

    @classmethod
    def from_flat(cls, theta, input_dim: int, hidden_dim: int) -> Network:
        theta = np.asarray(theta, dtype=np.float64)
        h, d = hidden_dim, input_dim
        i = h * d
        return cls(
            theta[:i].reshape(h, d),
            theta[i : i + h],
            theta[i + h : i + 3 * h].reshape(2, h),
            theta[i + 3 * h : i + 3 * h + 2],
        )

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in ("w1", "b1", "w2", "b2")
        )

    __hash__ = None


def init_network(input_dim: int, hidden_dim: int, seed: int) -> Network:
    """Glorot-uniform weights, zero biases."""
    if input_dim < 1 or hidden_dim < 1:
        raise ValueError("dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    lim1 = math.sqrt(6.0 / (input_dim + hidden_dim))
    lim2 = math.sqrt(6.0 / (hidden_dim + 2))
    return Network(
        rng.uniform(-lim1, lim1, size=(hidden_dim, input_dim)),
        np.zeros(hidden_dim),
        rng.uniform(-lim2, lim2, size=(2, hidden_dim)),
        np.zeros(2),
    )


def _check_dim(net: Network, X: np.ndarray):
    if X.shape[-1] != net.input_dim:
        raise ValueError(f"expected {net.input_dim} inputs, got {X.shape[-1]}")


def first_score(net: Network, X) -> np.ndarray:
    """Softmax probability of output 0 for each row of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    _check_dim(net, X)
    h = np.tanh(X @ net.w1.T + net.b1)
    z = h @ net.w2.T + net.b2
    # two-way softmax reduces to a logistic of the logit gap
    gap = z[..., 1] - z[..., 0]
    return _logistic(-gap)


def _logistic(t):
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def forward(net: Network, x) -> tuple[float, float]:
    """Pair of output probabilities for a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("forward takes a single feature vector")
    p = float(first_score(net, x[None, :])[0])
    return p, 1.0 - p


def loss_and_gradient(net: Network, X, T) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient, flattened as (w1, b1, w2, b2).

    ``T`` holds one-hot targets with shape ``(n, 2)``.
    """
    X = np.asarray(X, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a non-empty 2-D batch")
    _check_dim(net, X)
    if T.shape != (X.shape[0], 2):
        raise ValueError(f"targets must have shape ({X.shape[0]}, 2)")
    return _loss_grad(net.w1, net.b1, net.w2, net.b2, X, T)


def _loss_grad(w1, b1, w2, b2, X, T):
    n = X.shape[0]
    h = np.tanh(X @ w1.T + b1)
    z = h @ w2.T + b2
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    norm = ez.sum(axis=1, keepdims=True)
    logp = z - zmax - np.log(norm)
    loss = -float(np.sum(T * logp)) / n
    dz = (ez / norm - T) / n
    gw2 = dz.T @ h
    gb2 = dz.sum(axis=0)
    dh = (dz @ w2) * (1.0 - h * h)
    gw1 = dh.T @ X
    gb1 = dh.sum(axis=0)
    return loss, np.concatenate([gw1.ravel(), gb1, gw2.ravel(), gb2])


def mean_loss(net: Network, X, T) -> float:
    X = np.asarray(X, dtype=np.float64)
    _check_dim(net, X)
    return _Objective(X, np.asarray(T, dtype=np.float64), net.input_dim, net.hidden_dim).loss_only(
        net.flat()
    )


def restart_seed(seed: int, restart: int) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFF, restart]).generate_state(1)[0])


@dataclass(frozen=True)
class TrainOptions:
    max_iterations: int = 300
    restarts: int = 1
    patience: int | None = 20
    eval_every: int = 5
    validation_fraction: float = 0.30
    hidden_dim: int = 30
    line_search: str = "wolfe"
    armijo_c: float = 1e-4
    wolfe_c2: float = 0.1
    shrink: float = 0.5
    powell_restart: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1 (or None for no early stopping)")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.max_iterations < 0 or self.restarts < 1 or self.eval_every < 1:
            raise ValueError("max_iterations >= 0, restarts >= 1, eval_every >= 1 required")
        if self.line_search not in ("wolfe", "armijo"):
            raise ValueError("line_search must be 'wolfe' or 'armijo'")

    def with_seed(self, seed: int) -> TrainOptions:
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Snapshot:
    restart: int
    iteration: int
    val_loss: float


class _Objective:
    """Loss/gradient over a flat parameter vector with fixed data."""

    def __init__(self, X, T, input_dim, hidden_dim):
        self.X, self.T = X, T
        self.d, self.h = input_dim, hidden_dim
        self.calls = 0

    def unpack(self, theta):
        h, d = self.h, self.d
        i = h * d
        return (
            theta[:i].reshape(h, d),
            theta[i : i + h],
            theta[i + h : i + 3 * h].reshape(2, h),
            theta[i + 3 * h :],
        )

    def __call__(self, theta):
        self.calls += 1
        with np.errstate(over="ignore", invalid="ignore"):
            return _loss_grad(*self.unpack(theta), self.X, self.T)

    def loss_only(self, theta):
        w1, b1, w2, b2 = self.unpack(theta)
        with np.errstate(over="ignore", invalid="ignore"):
            h = np.tanh(self.X @ w1.T + b1)
            z = h @ w2.T + b2
            zmax = z.max(axis=1, keepdims=True)
            logp = z - zmax - np.log(np.exp(z - zmax).sum(axis=1, keepdims=True))
        return -float(np.sum(self.T * logp)) / self.X.shape[0]


def _armijo(fg, theta, f, slope, direction, a, c, shrink):
    """Backtrack from step ``a`` until the sufficient-decrease condition holds."""
    while a > 1e-16:
        f_new, g_new = fg(theta + a * direction)
        if math.isfinite(f_new) and f_new <= f + c * a * slope:
            return a, f_new, g_new
        a *= shrink
    return None, None, None


def train(
    net: Network,
    train_set: tuple,
    val_set: tuple,
    opts: TrainOptions = TrainOptions(),
    log: list | None = None,
) -> Network:
    """Fit ``net`` and return the snapshot with the lowest validation loss.

    ``train_set`` and ``val_set`` are ``(X, T)`` pairs. Restart 0 starts
    from ``net``; further restarts start from fresh seeded initializations.
    Every evaluated snapshot is appended to ``log`` when given.
    """
    X, T = (np.asarray(a, dtype=np.float64) for a in train_set)
    Xv, Tv = (np.asarray(a, dtype=np.float64) for a in val_set)
    if X.shape[0] == 0 or Xv.shape[0] == 0:
        raise ValueError("training and validation sets must be non-empty")
    _check_dim(net, X)
    _check_dim(net, Xv)
    d, h = net.input_dim, net.hidden_dim
    objective = _Objective(X, T, d, h)
    f_val = _Objective(Xv, Tv, d, h)
    n_params = net.n_params

    cache: dict = {}

    def fg(theta):
        key = theta.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = objective(theta)
        return cache[key]

    best_theta, best_val = None, math.inf

    def record(restart, it, theta):
        nonlocal best_theta, best_val
        v = f_val.loss_only(theta)
        if log is not None:
            log.append(Snapshot(restart, it, v))
        if v < best_val:
            best_theta, best_val = theta.copy(), v
        return v

    for restart in range(opts.restarts):
        if restart == 0:
            theta = net.flat()
        else:
            theta = init_network(d, h, seed=restart_seed(opts.seed, restart)).flat()
        f, g = fg(theta)
        if not (math.isfinite(f) and np.all(np.isfinite(g))):
            continue
        run_best = record(restart, 0, theta)
        stale = 0
        direction = -g
        since_reset = 0
        f_prev = None
        step = 1.0 / max(1.0, float(np.linalg.norm(g)))
        for it in range(1, opts.max_iterations + 1):
            slope = float(g @ direction)
            if slope >= 0:
                direction, slope, since_reset = -g, -float(g @ g), 0
            if slope == 0.0:
                break
            a = f_new = g_new = None
            if opts.line_search == "wolfe":
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    with np.errstate(over="ignore", invalid="ignore"):
                        a, _, _, f_new, _, g_new = line_search(
                            lambda t: fg(t)[0], lambda t: fg(t)[1], theta, direction,
                            g, f, f_prev, c1=opts.armijo_c, c2=opts.wolfe_c2,
                        )
                if a is not None and (g_new is None or not math.isfinite(f_new)):
                    f_new, g_new = fg(theta + a * direction)
                    if not math.isfinite(f_new):
                        a = None
            if a is None:
                a, f_new, g_new = _armijo(
                    fg, theta, f, slope, direction, step, opts.armijo_c, opts.shrink
                )
            if a is None:
                break
            gg = float(g @ g)
            beta = float(g_new @ (g_new - g)) / gg if gg > 0 else 0.0
            since_reset += 1
            if (
                beta < 0
                or since_reset >= n_params
                or (opts.powell_restart and abs(float(g_new @ g)) >= 0.2 * float(g_new @ g_new))
            ):
                beta, since_reset = 0.0, 0
            theta = theta + a * direction
            direction = -g_new + beta * direction
            f_prev, f, g = f, f_new, g_new
            step = 2.0 * a
            if it % opts.eval_every == 0:
                v = record(restart, it, theta)
                if v < run_best:
                    run_best, stale = v, 0
                else:
                    stale += 1
                    if opts.patience is not None and stale >= opts.patience:
                        break
        else:
            if opts.max_iterations % opts.eval_every:
                record(restart, opts.max_iterations, theta)

    if best_theta is None:
        return net
    return Network.from_flat(best_theta, d, h)


def save_network(net: Network, path, metadata: dict | None = None) -> None:
    """Binary weights plus a ``.json`` sidecar.

    Layout: 8-byte magic ``PNMLP001``, uint32 input_dim, uint32 hidden_dim
    (little-endian), then float64 little-endian w1, b1, w2, b2 row-major.
    """
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, net.input_dim, net.hidden_dim))
        fh.write(net.flat().astype("<f8").tobytes())
    sidecar = {"input_dim": net.input_dim, "hidden_dim": net.hidden_dim, **(metadata or {})}
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(sidecar, indent=1, sort_keys=True) + "\n"
    )


def load_network(path) -> Network:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated model file")
    magic, d, h = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    theta = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if theta.size != h * (d + 3) + 2:
        raise ValueError(f"{path}: expected {h * (d + 3) + 2} weights, found {theta.size}")
    return Network.from_flat(theta.astype(np.float64), d, h)
