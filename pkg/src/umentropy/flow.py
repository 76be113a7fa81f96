"""Masked autoregressive flow trained by maximum likelihood.

Each layer is a MADE network with two tanh hidden layers that outputs a
shift ``mu_j`` and log-scale ``alpha_j`` for every coordinate ``j``, with
``(mu_j, alpha_j)`` depending only on coordinates earlier in the layer's
ordering. The density direction (data -> base) of a layer is

    u_j = (x_j - mu_j(x)) * exp(-alpha_j(x)),    log|det| = -sum_j alpha_j

and is evaluated in a single pass. The sampling direction needs one
network evaluation per coordinate.

All parameters of a model live in one flat float64 vector; the per-layer
weight matrices are views into it. That keeps Adam a handful of vector
operations regardless of depth. Masked weight entries are zero at
construction and receive zero gradient, so they stay zero and the forward
pass never needs to multiply by the masks.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import Diverged, NonFinite
from .samples import as_samples

log = logging.getLogger(__name__)

ALPHA_CLAMP = 7.0
CDF_FLOOR = 1e-15
LOG_2PI = float(np.log(2.0 * np.pi))

_PARAM_NAMES = ("W1", "b1", "W2", "b2", "Wm", "bm", "Wa", "ba")


def gaussian_cdf(y):
    """Standard normal CDF, clamped to [1e-15, 1 - 1e-15]."""
    return np.clip(ndtr(np.asarray(y, dtype=np.float64)), CDF_FLOOR, 1.0 - CDF_FLOOR)


def normal_logpdf(y):
    y = np.asarray(y, dtype=np.float64)
    return -0.5 * LOG_2PI - 0.5 * y * y


def base_log_density(y):
    """Log-density of the d-dimensional standard normal, row-wise."""
    y = np.atleast_2d(y)
    return normal_logpdf(y).sum(axis=1)


def _degrees(d, reverse):
    deg = np.arange(1, d + 1)
    return deg[::-1].copy() if reverse else deg


def _layer_shapes(d, h):
    return {"W1": (h, d), "b1": (h,), "W2": (h, h), "b2": (h,),
            "Wm": (d, h), "bm": (d,), "Wa": (d, h), "ba": (d,)}


class MadeLayer:
    """One masked affine autoregressive layer; parameters are views."""

    def __init__(self, d, hidden, degrees, theta, offset):
        self.d = d
        self.hidden = hidden
        self.degrees = np.asarray(degrees)
        self.offset = offset
        self.size = 0
        self.p = {}
        self.bind(theta)
        hid_deg = np.arange(hidden) % max(d - 1, 1) + 1
        self.M1 = (hid_deg[:, None] >= self.degrees[None, :]).astype(np.float64)
        self.M2 = (hid_deg[:, None] >= hid_deg[None, :]).astype(np.float64)
        self.Mo = (self.degrees[:, None] > hid_deg[None, :]).astype(np.float64)

    def bind(self, theta):
        pos = self.offset
        for name, shape in _layer_shapes(self.d, self.hidden).items():
            n = int(np.prod(shape))
            self.p[name] = theta[pos:pos + n].reshape(shape)
            pos += n
        self.size = pos - self.offset

    def masks(self):
        return {"W1": self.M1, "W2": self.M2, "Wm": self.Mo, "Wa": self.Mo}

    def apply_masks(self):
        for name, m in self.masks().items():
            self.p[name] *= m

    def conditioner(self, x):
        p = self.p
        h1 = np.tanh(x @ p["W1"].T + p["b1"])
        h2 = np.tanh(h1 @ p["W2"].T + p["b2"])
        mu = h2 @ p["Wm"].T + p["bm"]
        raw = h2 @ p["Wa"].T + p["ba"]
        return mu, raw, h1, h2

    def forward(self, x):
        """Data -> base direction. Returns u, per-row log|det|, cache."""
        mu, raw, h1, h2 = self.conditioner(x)
        alpha = np.clip(raw, -ALPHA_CLAMP, ALPHA_CLAMP)
        u = (x - mu) * np.exp(-alpha)
        return u, -alpha.sum(axis=1), (x, h1, h2, raw, alpha, u)

    def inverse(self, u):
        x = np.zeros_like(u)
        for pos in range(1, self.d + 1):
            j = int(np.flatnonzero(self.degrees == pos)[0])
            mu, raw, _, _ = self.conditioner(x)
            alpha = np.clip(raw[:, j], -ALPHA_CLAMP, ALPHA_CLAMP)
            x[:, j] = u[:, j] * np.exp(alpha) + mu[:, j]
        return x

    def backward(self, cache, gu, c, grad):
        """Accumulate parameter gradients into ``grad``; return dL/dx.

        ``gu`` is dL/du and ``c`` is dL/d(log|det|) per row.
        """
        x, h1, h2, raw, alpha, u = cache
        p = self.p
        e = np.exp(-alpha)
        gx = gu * e
        gmu = -gx
        galpha = -gu * u - c[:, None]
        galpha = galpha * ((raw > -ALPHA_CLAMP) & (raw < ALPHA_CLAMP))
        g = {}
        g["Wm"] = (gmu.T @ h2) * self.Mo
        g["bm"] = gmu.sum(axis=0)
        g["Wa"] = (galpha.T @ h2) * self.Mo
        g["ba"] = galpha.sum(axis=0)
        ga2 = (gmu @ p["Wm"] + galpha @ p["Wa"]) * (1.0 - h2 * h2)
        g["W2"] = (ga2.T @ h1) * self.M2
        g["b2"] = ga2.sum(axis=0)
        ga1 = (ga2 @ p["W2"]) * (1.0 - h1 * h1)
        g["W1"] = (ga1.T @ x) * self.M1
        g["b1"] = ga1.sum(axis=0)
        pos = self.offset
        for name, shape in _layer_shapes(self.d, self.hidden).items():
            n = int(np.prod(shape))
            grad[pos:pos + n] = g[name].ravel()
            pos += n
        return gx + ga1 @ p["W1"]


@dataclass
class TrainConfig:
    n_layers: int = 5
    hidden_width: int = 50
    epochs: int = 400
    batch_size: int = 256
    learning_rate: float = 1e-3
    seed: int = 0
    patience: int = 50
    val_fraction: float = 0.1
    standardize: bool = True

    def __post_init__(self):
        for name in ("n_layers", "hidden_width", "epochs", "batch_size", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must be in (0, 1)")


@dataclass(eq=False)
class FlowModel:
    """A stack of MADE layers plus a fixed elementwise affine input map.

    The affine map ``(x - shift) / scale`` is applied before the first
    layer; with the default shift 0 and scale 1 it is the identity.
    Layer ``l`` uses the natural ordering for even ``l`` and the reversed
    ordering for odd ``l``.
    """

    d: int
    hidden: int
    theta: np.ndarray
    shift: np.ndarray
    scale: np.ndarray
    layers: list = field(default_factory=list)
    history: dict = field(default_factory=dict, repr=False)

    @classmethod
    def create(cls, d, n_layers=5, hidden=50, rng=None, head_scale=0.0,
               shift=None, scale=None):
        """Build a model. Without ``rng`` every parameter is zero (identity)."""
        per_layer = sum(int(np.prod(s)) for s in _layer_shapes(d, hidden).values())
        theta = np.zeros(per_layer * n_layers)
        model = cls(d=d, hidden=hidden, theta=theta,
                    shift=np.zeros(d) if shift is None else np.asarray(shift, float),
                    scale=np.ones(d) if scale is None else np.asarray(scale, float))
        model._build(n_layers)
        if rng is not None:
            model.init_params(rng, head_scale)
        return model

    @classmethod
    def identity(cls, d, n_layers=1, hidden=8):
        return cls.create(d, n_layers, hidden)

    def _build(self, n_layers):
        per_layer = sum(int(np.prod(s)) for s in _layer_shapes(self.d, self.hidden).values())
        self.layers = [MadeLayer(self.d, self.hidden, _degrees(self.d, l % 2 == 1),
                                 self.theta, l * per_layer)
                       for l in range(n_layers)]

    def rebind(self):
        for layer in self.layers:
            layer.bind(self.theta)

    def init_params(self, rng, head_scale=0.0):
        """Fan-in scaled uniform weights; output heads scaled by ``head_scale``."""
        for layer in self.layers:
            for name in ("W1", "W2"):
                w = layer.p[name]
                bound = 1.0 / np.sqrt(w.shape[1])
                w[...] = rng.uniform(-bound, bound, size=w.shape)
            for name in ("Wm", "Wa", "bm", "ba"):
                w = layer.p[name]
                w[...] = head_scale * rng.uniform(-1.0, 1.0, size=w.shape)
            layer.apply_masks()

    def free_parameters(self):
        """Boolean mask over ``theta``: False where a weight is masked out."""
        free = np.ones(self.theta.size, dtype=bool)
        for layer in self.layers:
            pos = layer.offset
            masks = layer.masks()
            for name, shape in _layer_shapes(self.d, self.hidden).items():
                n = int(np.prod(shape))
                if name in masks:
                    free[pos:pos + n] = masks[name].ravel() > 0
                pos += n
        return free

    @property
    def n_layers(self):
        return len(self.layers)

    @property
    def orderings(self):
        return [layer.degrees.copy() for layer in self.layers]

    # -- inference ---------------------------------------------------------

    def _prepare(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.d:
            raise ValueError(f"expected dimension {self.d}, got {x.shape[1]}")
        return x, single

    def push_to_base(self, x, per_layer=False):
        """Map data to the base space: ``y = g(x)`` and ``log|det dg/dx|``.

        Works on one d-vector or an (N, d) batch. With ``per_layer`` the
        individual layer log-determinants (input map first) are returned too.
        """
        x, single = self._prepare(x)
        with np.errstate(over="ignore", invalid="ignore"):
            y = (x - self.shift) / self.scale
            parts = [np.full(len(x), -np.sum(np.log(self.scale)))]
            for layer in self.layers:
                y, ld, _ = layer.forward(y)
                parts.append(ld)
        if not np.all(np.isfinite(y)):
            raise NonFinite("flow output overflowed; the model has diverged")
        log_det = np.sum(parts, axis=0)
        if single:
            y, log_det, parts = y[0], float(log_det[0]), [float(p[0]) for p in parts]
        return (y, log_det, parts) if per_layer else (y, log_det)

    def pull_from_base(self, y):
        """Inverse of :meth:`push_to_base` (the sampling direction)."""
        y, single = self._prepare(y)
        x = y
        with np.errstate(over="ignore", invalid="ignore"):
            for layer in reversed(self.layers):
                x = layer.inverse(x)
            x = x * self.scale + self.shift
        if not np.all(np.isfinite(x)):
            raise NonFinite("flow inverse overflowed")
        return x[0] if single else x

    def log_density(self, x):
        y, log_det = self.push_to_base(x)
        return base_log_density(y)[0] + log_det if np.ndim(y) == 1 else base_log_density(y) + log_det

    def sample(self, n, rng):
        return self.pull_from_base(rng.standard_normal((n, self.d)))

    # -- training ----------------------------------------------------------

    def nll_and_grad(self, x):
        """Mean negative log-likelihood of the rows of ``x`` and its gradient."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        b = len(x)
        y = (x - self.shift) / self.scale
        log_det = np.full(b, -np.sum(np.log(self.scale)))
        caches = []
        for layer in self.layers:
            y, ld, cache = layer.forward(y)
            log_det = log_det + ld
            caches.append(cache)
        loss = float(np.mean(0.5 * np.sum(y * y, axis=1) + 0.5 * self.d * LOG_2PI - log_det))
        grad = np.empty_like(self.theta)
        gu = y / b
        c = np.full(b, -1.0 / b)
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            gu = layer.backward(cache, gu, c, grad)
        return loss, grad

    def nll(self, x):
        return float(-np.mean(self.log_density(np.atleast_2d(x))))

    # -- serialization -----------------------------------------------------

    def to_dict(self):
        return {
            "format": "umentropy-maf/1",
            "d": self.d,
            "hidden": self.hidden,
            "n_layers": self.n_layers,
            "orderings": [o.tolist() for o in self.orderings],
            "shift": self.shift.tolist(),
            "scale": self.scale.tolist(),
            "theta": self.theta.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format") != "umentropy-maf/1":
            raise ValueError("not a serialized flow model")
        model = cls.create(doc["d"], doc["n_layers"], doc["hidden"],
                           shift=doc["shift"], scale=doc["scale"])
        theta = np.asarray(doc["theta"], dtype=np.float64)
        if theta.shape != model.theta.shape:
            raise ValueError("parameter vector has the wrong length")
        model.theta[:] = theta
        if [o.tolist() for o in model.orderings] != doc["orderings"]:
            raise ValueError("unsupported layer orderings")
        return model

    def dumps(self):
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))

    def copy(self):
        other = copy.copy(self)
        other.theta = self.theta.copy()
        other.shift = self.shift.copy()
        other.scale = self.scale.copy()
        other.history = {}
        other._build(self.n_layers)
        return other


class _Adam:
    def __init__(self, size, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta, grad):
        self.t += 1
        self.m *= self.b1
        self.m += (1 - self.b1) * grad
        self.v *= self.b2
        self.v += (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        theta -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def train(samples, config: TrainConfig | None = None, init: FlowModel | None = None) -> FlowModel:
    """Fit a MAF by maximum likelihood with Adam and early stopping.

    A ``val_fraction`` share of the rows is held out; the returned model
    carries the parameters with the lowest validation NLL seen. Per-epoch
    losses are kept in ``model.history``. Identical seed and data give
    bitwise-identical parameters.
    """
    cfg = config or TrainConfig()
    x = as_samples(samples).data
    n, d = x.shape
    rng = np.random.default_rng(cfg.seed)

    perm = rng.permutation(n)
    n_val = max(1, int(round(cfg.val_fraction * n))) if n >= 10 else 0
    val, tr = x[perm[:n_val]], x[perm[n_val:]]

    if init is not None:
        model = init.copy()
    else:
        shift = scale = None
        if cfg.standardize:
            shift = tr.mean(axis=0)
            scale = tr.std(axis=0)
            scale = np.where(scale > 0, scale, 1.0)
        model = FlowModel.create(d, cfg.n_layers, cfg.hidden_width, rng=rng,
                                 shift=shift, scale=scale)

    opt = _Adam(model.theta.size, cfg.learning_rate)
    monitor = val if n_val else tr
    best = model.nll(monitor)
    best_theta = model.theta.copy()
    history = {"train": [], "val": [], "initial": best}
    stale = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(tr))
        total = 0.0
        for start in range(0, len(tr), cfg.batch_size):
            batch = tr[order[start:start + cfg.batch_size]]
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grad = model.nll_and_grad(batch)
            if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
                raise Diverged(f"training loss became non-finite at epoch {epoch}")
            opt.step(model.theta, grad)
            total += loss * len(batch)
        history["train"].append(total / len(tr))
        try:
            current = model.nll(monitor)
        except NonFinite as exc:
            raise Diverged(f"validation pass overflowed at epoch {epoch}") from exc
        history["val"].append(current)
        if current < best:
            best, best_theta, stale = current, model.theta.copy(), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                log.debug("early stop at epoch %d (best val nll %.4f)", epoch, best)
                break
    model.theta[:] = best_theta
    model.history = history
    return model
