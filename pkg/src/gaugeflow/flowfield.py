"""Velocity-field assembly for plain and gauge-corrected flow models.

The gauge models evaluate

    v(x, t) = v_theta(x, t) - alpha(t) * (sum_mu d^mu A_mu(x, t)) v_nu(x, t)

where A takes values in so(N) and d aliases v_theta or v_nu depending on
the variant. Because the contraction matrix is skew, the correction is
orthogonal to v_nu, so the gauge term redirects the field without feeding
or draining the v_nu component it acts on.

Gradients flow through every factor of the gauge term, including through d
when it aliases a learnable field: one shared forward pass, full product
rule on the way back.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .nn import Mlp, MlpCache, checkpoint_load, checkpoint_save, mlp_backward, mlp_forward, mlp_init
from .rng import Prng
from .songauge import SkewBasis


class DivergenceError(RuntimeError):
    """Non-finite state or loss encountered."""


class ModelKind(str, Enum):
    PLAIN_BASELINE = "plain-baseline"
    PLAIN_MATCHED = "plain-matched"
    GAUGE_THETA = "gauge-theta"
    GAUGE_NU = "gauge-nu"

    @classmethod
    def parse(cls, name: str) -> "ModelKind":
        for kind in cls:
            if kind.value == name:
                return kind
        raise ValueError(f"unknown model kind {name!r}; expected one of "
                         f"{', '.join(k.value for k in cls)}")

    @property
    def is_gauge(self) -> bool:
        return self in (ModelKind.GAUGE_THETA, ModelKind.GAUGE_NU)


def hidden_width(n_dim: int) -> int:
    # gauge sub-network width drops to 32 above dimension 10
    return 32 if n_dim > 10 else 64


def mlp_dims_param_count(dims: list[int]) -> int:
    return sum(dims[i + 1] * (dims[i] + 1) for i in range(len(dims) - 1))


def gauge_layer_dims(n_dim: int) -> dict[str, list[int]]:
    w = hidden_width(n_dim)
    dim_g = n_dim * (n_dim - 1) // 2
    return {
        "v_theta": [n_dim + 1, w, w, n_dim],
        "a_net": [n_dim + 1, w, w, n_dim * dim_g],
        "v_nu": [n_dim + 1, w, w, n_dim],
        "alpha_net": [1, 16, 1],
    }


def gauge_total_params(n_dim: int) -> int:
    return sum(mlp_dims_param_count(d) for d in gauge_layer_dims(n_dim).values())


def plain_baseline_dims(n_dim: int) -> list[int]:
    return [n_dim + 1, 128, 128, 128, n_dim]


def plain_matched_width(n_dim: int) -> int:
    """Smallest uniform 3-hidden-layer width matching or exceeding the gauge size."""
    target = gauge_total_params(n_dim)
    w = 1
    while mlp_dims_param_count([n_dim + 1, w, w, w, n_dim]) < target:
        w += 1
    return w


def plain_matched_dims(n_dim: int) -> list[int]:
    w = plain_matched_width(n_dim)
    return [n_dim + 1, w, w, w, n_dim]


@dataclass
class GaugeFlowModel:
    n_dim: int
    variant: ModelKind
    v_theta: Mlp
    a_net: Mlp
    v_nu: Mlp
    alpha_net: Mlp
    basis: SkewBasis

    def networks(self) -> list[tuple[str, Mlp]]:
        return [("v_theta", self.v_theta), ("a_net", self.a_net),
                ("v_nu", self.v_nu), ("alpha_net", self.alpha_net)]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for _, net in self.networks():
            out.extend(net.parameters())
        return out


@dataclass
class PlainFlowModel:
    n_dim: int
    variant: ModelKind
    net: Mlp

    def networks(self) -> list[tuple[str, Mlp]]:
        return [("net", self.net)]

    def parameters(self) -> list[np.ndarray]:
        return self.net.parameters()


def build_model(kind: ModelKind, n_dim: int, seed: int):
    """Construct a model; sub-networks draw from seeds seed, seed+1, ... in
    the fixed order v_theta, a_net, v_nu, alpha_net."""
    kind = ModelKind(kind)
    if n_dim < 2:
        raise ValueError(f"model dimension must be >= 2, got {n_dim}")
    if kind is ModelKind.PLAIN_BASELINE:
        return PlainFlowModel(n_dim, kind, mlp_init(plain_baseline_dims(n_dim), Prng(seed)))
    if kind is ModelKind.PLAIN_MATCHED:
        return PlainFlowModel(n_dim, kind, mlp_init(plain_matched_dims(n_dim), Prng(seed)))
    dims = gauge_layer_dims(n_dim)
    return GaugeFlowModel(
        n_dim, kind,
        mlp_init(dims["v_theta"], Prng(seed)),
        mlp_init(dims["a_net"], Prng(seed + 1)),
        mlp_init(dims["v_nu"], Prng(seed + 2)),
        mlp_init(dims["alpha_net"], Prng(seed + 3)),
        SkewBasis(n_dim),
    )


def param_count(model) -> int:
    return sum(p.size for p in model.parameters())


# -- forward / backward -------------------------------------------------------


@dataclass
class VelocityCache:
    """Forward record of one velocity evaluation, consumed by velocity_backward."""

    model: object
    single: bool
    net_caches: dict[str, MlpCache]
    v_theta: np.ndarray | None = None
    v_nu: np.ndarray | None = None
    alpha: np.ndarray | None = None
    coeffs: np.ndarray | None = None      # (batch, n, dim_g)
    contracted: np.ndarray | None = None  # (batch, n, n) skew
    correction: np.ndarray | None = None  # (batch, n) = contracted @ v_nu


def _as_batch(x, t, n_dim):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != n_dim:
        raise ValueError(f"points must have shape (batch, {n_dim}) or ({n_dim},), got {x.shape}")
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 0:
        t = np.full(x.shape[0], float(t))
    if t.shape != (x.shape[0],):
        raise ValueError(f"t must be scalar or shape ({x.shape[0]},), got {t.shape}")
    return x, t, single


def velocity_with_cache(model, x, t) -> tuple[np.ndarray, VelocityCache]:
    """ODE right-hand side with the forward record needed for backward.

    Accepts a point (n,) with scalar t, or a batch (b, n) with scalar or
    (b,) t. Time enters as the last input coordinate.
    """
    xb, tb, single = _as_batch(x, t, model.n_dim)
    xt_in = np.concatenate([xb, tb[:, None]], axis=1)

    if isinstance(model, PlainFlowModel):
        y, cache = mlp_forward(model.net, xt_in)
        vc = VelocityCache(model, single, {"net": cache})
        return (y[0] if single else y), vc

    n, dim_g = model.n_dim, model.basis.dim_g
    vt, c_vt = mlp_forward(model.v_theta, xt_in)
    raw, c_a = mlp_forward(model.a_net, xt_in)
    vn, c_vn = mlp_forward(model.v_nu, xt_in)
    alpha, c_al = mlp_forward(model.alpha_net, tb[:, None])

    coeffs = raw.reshape(-1, n, dim_g)  # direction-major blocks
    d = vt if model.variant is ModelKind.GAUGE_THETA else vn
    combined = np.einsum("bm,bmg->bg", d, coeffs)
    contracted = model.basis.from_coefficients(combined)       # (b, n, n), exactly skew
    correction = np.einsum("bij,bj->bi", contracted, vn)
    v = vt - alpha * correction

    vc = VelocityCache(model, single,
                       {"v_theta": c_vt, "a_net": c_a, "v_nu": c_vn, "alpha_net": c_al},
                       v_theta=vt, v_nu=vn, alpha=alpha, coeffs=coeffs,
                       contracted=contracted, correction=correction)
    return (v[0] if single else v), vc


def velocity(model, x, t) -> np.ndarray:
    return velocity_with_cache(model, x, t)[0]


def velocity_backward(model, cache: VelocityCache, grad_v) -> list[np.ndarray]:
    """Gradients of <grad_v, velocity> wrt all parameters, in parameters() order."""
    if cache.model is not model:
        raise ValueError("cache does not belong to this model")
    g = np.asarray(grad_v, dtype=np.float64)
    if cache.single:
        g = g[None, :]

    if isinstance(model, PlainFlowModel):
        grads, _ = mlp_backward(model.net, cache.net_caches["net"], g)
        return grads

    basis = model.basis
    vt, vn, alpha = cache.v_theta, cache.v_nu, cache.alpha
    d = vt if model.variant is ModelKind.GAUGE_THETA else vn

    # v = vt - alpha * w  with  w = M vn,  M = sum_mu d^mu A_mu
    d_alpha = -np.sum(g * cache.correction, axis=1, keepdims=True)
    dw = -alpha * g
    d_vn = np.einsum("bij,bi->bj", cache.contracted, dw)  # M^T dw
    # dL/dM = dw (x) vn, projected onto the skew basis pair (a, b)
    g_skew = (dw[:, basis.rows] * vn[:, basis.cols]
              - dw[:, basis.cols] * vn[:, basis.rows])     # (b, dim_g)
    d_coeffs = np.einsum("bm,bg->bmg", d, g_skew)
    d_dir = np.einsum("bmg,bg->bm", cache.coeffs, g_skew)

    d_vt = g.copy()
    if model.variant is ModelKind.GAUGE_THETA:
        d_vt += d_dir
    else:
        d_vn = d_vn + d_dir

    grads_vt, _ = mlp_backward(model.v_theta, cache.net_caches["v_theta"], d_vt)
    grads_a, _ = mlp_backward(model.a_net, cache.net_caches["a_net"],
                              d_coeffs.reshape(d_coeffs.shape[0], -1))
    grads_vn, _ = mlp_backward(model.v_nu, cache.net_caches["v_nu"], d_vn)
    grads_al, _ = mlp_backward(model.alpha_net, cache.net_caches["alpha_net"], d_alpha)
    return grads_vt + grads_a + grads_vn + grads_al


# -- sampling ---------------------------------------------------------------


def integrate(model_or_field, x0, steps: int, method: str = "rk4") -> np.ndarray:
    """Fixed-step integration of dx/dt = v(x, t) from t=0 to t=1.

    model_or_field is a model or a callable (x, t) -> velocity. Returns the
    trajectory on the uniform grid, shape (steps+1,) + x0.shape.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if method not in ("euler", "rk4"):
        raise ValueError(f"unknown integrator {method!r}; expected 'euler' or 'rk4'")
    if callable(model_or_field):
        f = model_or_field
    else:
        f = lambda x, t: velocity(model_or_field, x, t)
    x = np.asarray(x0, dtype=np.float64).copy()
    dt = 1.0 / steps
    traj = np.empty((steps + 1,) + x.shape)
    traj[0] = x
    for k in range(steps):
        t = k / steps
        if method == "euler":
            x = x + dt * f(x, t)
        else:
            k1 = f(x, t)
            k2 = f(x + 0.5 * dt * k1, t + 0.5 * dt)
            k3 = f(x + 0.5 * dt * k2, t + 0.5 * dt)
            k4 = f(x + dt * k3, t + dt)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite state at integration step {k + 1} of {steps}")
        traj[k + 1] = x
    return traj


# -- checkpoints --------------------------------------------------------------


def save_model(model, path, seed: int = 0) -> None:
    checkpoint_save(path, model.variant.value, model.n_dim, seed, model.networks())


def load_model(path):
    """Rebuild a model from a checkpoint, validating dims against its kind."""
    kind_name, n_dim, _seed, networks = checkpoint_load(path)
    kind = ModelKind.parse(kind_name)
    by_name = dict(networks)
    if kind.is_gauge:
        expected = gauge_layer_dims(n_dim)
    elif kind is ModelKind.PLAIN_BASELINE:
        expected = {"net": plain_baseline_dims(n_dim)}
    else:
        expected = {"net": plain_matched_dims(n_dim)}
    if set(by_name) != set(expected):
        raise ValueError(f"checkpoint networks {sorted(by_name)} do not match "
                         f"model kind {kind.value} (expected {sorted(expected)})")
    for name, dims in expected.items():
        if by_name[name].layer_dims != dims:
            raise ValueError(f"network {name!r} has dims {by_name[name].layer_dims}, "
                             f"expected {dims} for kind {kind.value} at N={n_dim}")
    if kind.is_gauge:
        return GaugeFlowModel(n_dim, kind, by_name["v_theta"], by_name["a_net"],
                              by_name["v_nu"], by_name["alpha_net"], SkewBasis(n_dim))
    return PlainFlowModel(n_dim, kind, by_name["net"])
