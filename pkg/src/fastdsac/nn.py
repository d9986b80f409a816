"""Small float64 MLP core: forward, reverse-mode backward, AdamW, FD checks.

Everything is batch-first: inputs have shape ``(B, input_dim)`` and layer ``i``
computes ``x @ W{i} + b{i}``.  Hidden layers optionally apply LayerNorm to the
pre-activation before the ReLU.  The last layer is affine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import ConfigError, InputError, NumericalFault

LN_EPS = 1e-5

Gradients = dict[str, np.ndarray]


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int
    use_layer_norm: bool = False
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        widths = (self.input_dim, *self.hidden_widths, self.output_dim)
        if any(int(w) < 1 for w in widths):
            raise ConfigError(f"all layer widths must be >= 1, got {widths}")
        if self.activation != "relu":
            raise ConfigError(f"only relu activation is supported, got {self.activation!r}")
        if self.use_layer_norm and any(w < 2 for w in self.hidden_widths):
            raise ConfigError("LayerNorm needs hidden widths >= 2")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_widths, self.output_dim)

    @property
    def n_layers(self) -> int:
        return len(self.hidden_widths) + 1

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        sizes = self.layer_sizes
        shapes: dict[str, tuple[int, ...]] = {}
        for i in range(self.n_layers):
            shapes[f"W{i}"] = (sizes[i], sizes[i + 1])
            shapes[f"b{i}"] = (sizes[i + 1],)
            if self.use_layer_norm and i < self.n_layers - 1:
                shapes[f"ln{i}_scale"] = (sizes[i + 1],)
                shapes[f"ln{i}_shift"] = (sizes[i + 1],)
        return shapes


@dataclass
class ParamStore:
    """Named parameter arrays plus AdamW moment buffers."""

    entries: dict[str, np.ndarray]
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for name, p in self.entries.items():
            self.first_moment.setdefault(name, np.zeros_like(p))
            self.second_moment.setdefault(name, np.zeros_like(p))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.entries[name]

    def names(self) -> list[str]:
        return list(self.entries)

    def copy(self) -> ParamStore:
        return ParamStore(
            {k: v.copy() for k, v in self.entries.items()},
            self.step_count,
            {k: v.copy() for k, v in self.first_moment.items()},
            {k: v.copy() for k, v in self.second_moment.items()},
        )

    def num_params(self) -> int:
        return sum(p.size for p in self.entries.values())

    # -- checkpoint fragment -------------------------------------------------

    def to_fragment(self, prefix: str, offset: int = 0) -> tuple[list[dict], bytes]:
        """Serialize parameters and moments as manifest rows + LE float64 payload."""
        manifest, chunks = [], []
        groups = (("param", self.entries), ("m", self.first_moment), ("v", self.second_moment))
        for kind, arrays in groups:
            for name, arr in arrays.items():
                raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
                manifest.append(
                    {"name": f"{prefix}/{kind}/{name}", "shape": list(arr.shape), "offset": offset}
                )
                chunks.append(raw)
                offset += len(raw)
        return manifest, b"".join(chunks)

    @classmethod
    def from_fragment(
        cls, prefix: str, manifest: Iterable[dict], payload: bytes, step_count: int = 0
    ) -> ParamStore:
        groups: dict[str, dict[str, np.ndarray]] = {"param": {}, "m": {}, "v": {}}
        head = prefix + "/"
        for row in manifest:
            if not row["name"].startswith(head):
                continue
            kind, name = row["name"][len(head):].split("/", 1)
            shape = tuple(row["shape"])
            count = int(np.prod(shape)) if shape else 1
            start = row["offset"]
            stop = start + 8 * count
            if stop > len(payload):
                raise InputError(f"fragment {row['name']} runs past the payload")
            arr = np.frombuffer(payload[start:stop], dtype="<f8").astype(np.float64).reshape(shape)
            groups[kind][name] = arr
        if not groups["param"]:
            raise InputError(f"no entries with prefix {prefix!r}")
        return cls(groups["param"], step_count, groups["m"], groups["v"])


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> ParamStore:
    """Uniform fan-in init with bound 1/sqrt(fan_in); zero biases; LN scale 1, shift 0."""
    entries = {}
    for name, shape in spec.param_shapes().items():
        if name.startswith("W"):
            bound = 1.0 / np.sqrt(shape[0])
            entries[name] = rng.uniform(-bound, bound, size=shape)
        elif name.endswith("_scale"):
            entries[name] = np.ones(shape)
        else:
            entries[name] = np.zeros(shape)
    return ParamStore(entries)


def check_params(spec: NetworkSpec, params: ParamStore) -> None:
    expected = spec.param_shapes()
    got = {k: v.shape for k, v in params.entries.items()}
    if got != expected:
        raise ConfigError(f"parameter shapes {got} do not match spec {expected}")


# -- layer norm ---------------------------------------------------------------


def layer_norm(v: np.ndarray, eps: float = LN_EPS) -> np.ndarray:
    """Normalize along the last axis to zero mean and unit population variance."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] < 2:
        raise ConfigError("layer_norm needs at least 2 features")
    mean = v.mean(axis=-1, keepdims=True)
    centered = v - mean
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    return centered / np.sqrt(var + eps)


def _layer_norm_backward(dy_hat: np.ndarray, xhat: np.ndarray, inv_std: np.ndarray) -> np.ndarray:
    n = xhat.shape[-1]
    s1 = dy_hat.sum(axis=-1, keepdims=True)
    s2 = (dy_hat * xhat).sum(axis=-1, keepdims=True)
    return inv_std * (dy_hat - s1 / n - xhat * s2 / n)


def relu_grad(z: np.ndarray) -> np.ndarray:
    return (z > 0).astype(np.float64)


# -- forward / backward ------------------------------------------------------


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each affine layer
    pre: list[np.ndarray]  # affine outputs of hidden layers
    post_norm: list[np.ndarray | None]  # LN output (pre-ReLU) when enabled
    xhat: list[np.ndarray | None]
    inv_std: list[np.ndarray | None]


def _as_batch(spec: NetworkSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ConfigError(f"expected input with {spec.input_dim} columns, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("non-finite network input")
    return x


def forward_cached(spec: NetworkSpec, params: ParamStore, x) -> tuple[np.ndarray, ForwardCache]:
    x = _as_batch(spec, x)
    p = params.entries
    cache = ForwardCache([], [], [], [], [])
    h = x
    last = spec.n_layers - 1
    for i in range(spec.n_layers):
        cache.inputs.append(h)
        z = h @ p[f"W{i}"] + p[f"b{i}"]
        if i == last:
            return z, cache
        cache.pre.append(z)
        if spec.use_layer_norm:
            mean = z.mean(axis=-1, keepdims=True)
            centered = z - mean
            inv_std = 1.0 / np.sqrt(np.mean(centered * centered, axis=-1, keepdims=True) + LN_EPS)
            xhat = centered * inv_std
            z = xhat * p[f"ln{i}_scale"] + p[f"ln{i}_shift"]
            cache.xhat.append(xhat)
            cache.inv_std.append(inv_std)
            cache.post_norm.append(z)
        else:
            cache.xhat.append(None)
            cache.inv_std.append(None)
            cache.post_norm.append(None)
        h = np.maximum(z, 0.0)
    raise AssertionError("unreachable")


def mlp_forward(spec: NetworkSpec, params: ParamStore, x) -> np.ndarray:
    return forward_cached(spec, params, x)[0]


def activation_pattern(cache: ForwardCache, spec: NetworkSpec) -> tuple[np.ndarray, ...]:
    """ReLU on/off masks; used by gradient checks to detect kink crossings."""
    gates = cache.post_norm if spec.use_layer_norm else cache.pre
    return tuple(g > 0 for g in gates)


def backward_cached(
    spec: NetworkSpec,
    params: ParamStore,
    cache: ForwardCache,
    upstream: np.ndarray,
    input_grad: bool = False,
    param_grads: bool = True,
) -> tuple[Gradients, np.ndarray | None]:
    """Reverse pass for a scalar loss whose gradient wrt the outputs is ``upstream``.

    With ``param_grads=False`` only the input gradient is produced.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    batch = cache.inputs[0].shape[0]
    if upstream.shape != (batch, spec.output_dim):
        raise ConfigError(
            f"upstream seed shape {upstream.shape} != output shape {(batch, spec.output_dim)}"
        )
    p = params.entries
    grads: Gradients = {}
    delta = upstream
    for i in range(spec.n_layers - 1, -1, -1):
        if param_grads:
            grads[f"W{i}"] = cache.inputs[i].T @ delta
            grads[f"b{i}"] = delta.sum(axis=0)
        if i == 0 and not input_grad:
            break
        dh = delta @ p[f"W{i}"].T
        if i == 0:
            return grads, dh
        j = i - 1
        if spec.use_layer_norm:
            dz_norm = dh * relu_grad(cache.post_norm[j])
            xhat = cache.xhat[j]
            if param_grads:
                grads[f"ln{j}_scale"] = (dz_norm * xhat).sum(axis=0)
                grads[f"ln{j}_shift"] = dz_norm.sum(axis=0)
            delta = _layer_norm_backward(dz_norm * p[f"ln{j}_scale"], xhat, cache.inv_std[j])
        else:
            delta = dh * relu_grad(cache.pre[j])
    return grads, None


def backward(spec: NetworkSpec, params: ParamStore, x, upstream_seed) -> Gradients:
    _, cache = forward_cached(spec, params, x)
    return backward_cached(spec, params, cache, upstream_seed)[0]


# -- optimizer -----------------------------------------------------------------


def adamw_step(
    params: ParamStore,
    grads: Gradients,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.95,
    weight_decay: float = 1e-4,
    eps_opt: float = 1e-8,
) -> ParamStore:
    """One AdamW step, in place.  Decay multiplies the weights directly."""
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalFault(f"non-finite gradient for parameter {name!r}", where=name)
    t = params.step_count + 1
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    decay = 1.0 - lr * weight_decay
    for name, p in params.entries.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        m = params.first_moment[name]
        v = params.second_moment[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p *= decay
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps_opt)
    params.step_count = t
    return params


# -- finite differences --------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    mean_rel_error: float
    n_checked: int
    n_skipped: int
    tol: float
    worst: str = ""

    @property
    def passed(self) -> bool:
        return self.n_checked > 0 and self.max_rel_error <= self.tol

    def merge(self, other: GradCheckReport) -> GradCheckReport:
        n = self.n_checked + other.n_checked
        mean = (
            (self.mean_rel_error * self.n_checked + other.mean_rel_error * other.n_checked) / n
            if n
            else 0.0
        )
        worst = self.worst if self.max_rel_error >= other.max_rel_error else other.worst
        return GradCheckReport(
            max(self.max_rel_error, other.max_rel_error),
            mean,
            n,
            self.n_skipped + other.n_skipped,
            self.tol,
            worst,
        )


# Denominator floor for relative error; keeps near-zero gradient entries from
# turning rounding noise into a huge ratio.
REL_ERR_FLOOR = 1e-6


def relative_error(analytic, numeric, floor: float = REL_ERR_FLOOR) -> np.ndarray:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


# central stencils: offsets (in units of h) and weights, divided by h * denom
_STENCILS = {
    2: ((1.0, -1.0), (1.0, -1.0), 2.0),
    4: ((2.0, 1.0, -1.0, -2.0), (-1.0, 8.0, -8.0, 1.0), 12.0),
}


def check_gradients(
    loss_fn: Callable[[], float],
    params: dict[str, np.ndarray],
    analytic: Gradients,
    h: float = 1e-4,
    tol: float = 1e-4,
    signature_fn: Callable[[], object] | None = None,
    order: int = 2,
) -> GradCheckReport:
    """Central differences over every entry of ``params`` (mutated and restored).

    ``order=2`` is the symmetric difference ``(f(x+h) - f(x-h)) / 2h``;
    ``order=4`` adds the +/-2h points, cancelling the h^2 truncation term.
    When ``signature_fn`` is given, entries whose perturbation changes the
    signature (e.g. a ReLU on/off pattern) are skipped as kink-adjacent.
    """
    if not 0 < h <= 1e-2:
        raise ConfigError(f"finite-difference step must lie in (0, 1e-2], got {h}")
    if order not in _STENCILS:
        raise ConfigError(f"stencil order must be 2 or 4, got {order}")
    offsets, weights, denom = _STENCILS[order]
    errors, worst_name, worst_val, skipped = [], "", -1.0, 0
    base_sig = signature_fn() if signature_fn else None
    for name, arr in params.items():
        flat = arr.reshape(-1)
        ana = np.asarray(analytic[name]).reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            values, kink = [], False
            for off in offsets:
                flat[k] = orig + off * h
                values.append(loss_fn())
                if signature_fn and not _same(signature_fn(), base_sig):
                    kink = True
            flat[k] = orig
            if kink:
                skipped += 1
                continue
            num = sum(w * v for w, v in zip(weights, values)) / (denom * h)
            err = float(relative_error(ana[k], num))
            errors.append(err)
            if err > worst_val:
                worst_val, worst_name = err, f"{name}[{k}]"
    if not errors:
        return GradCheckReport(float("inf"), float("inf"), 0, skipped, tol, "")
    return GradCheckReport(
        float(np.max(errors)), float(np.mean(errors)), len(errors), skipped, tol, worst_name
    )


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def finite_diff_check(
    spec: NetworkSpec,
    params: ParamStore,
    x,
    h: float = 1e-4,
    tol: float = 1e-4,
    upstream=None,
    rng: np.random.Generator | None = None,
    order: int = 2,
) -> GradCheckReport:
    """Compare :func:`backward` against central differences of ``sum(upstream * f(x))``."""
    x = _as_batch(spec, x)
    if upstream is None:
        rng = rng or np.random.default_rng(0)
        upstream = rng.standard_normal((x.shape[0], spec.output_dim))
    upstream = np.asarray(upstream, dtype=np.float64)
    analytic = backward(spec, params, x, upstream)

    def loss():
        return float(np.sum(upstream * mlp_forward(spec, params, x)))

    def signature():
        return activation_pattern(forward_cached(spec, params, x)[1], spec)

    return check_gradients(loss, params.entries, analytic, h, tol, signature, order)
