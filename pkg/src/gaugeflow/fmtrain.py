"""Conditional flow-matching training and the exact mixture-velocity oracle.

The conditional path is the linear interpolant x_t = (1-t) x0 + t x1 with
target velocity u = x1 - x0; times are drawn uniform on [0, 1 - t_clamp] so
the conditional-to-marginal conversion (which divides by 1 - t) never hits
the endpoint. Training minimizes the mean squared residual between the
model velocity and the conditional target, one (t, x0) draw per data point
per epoch.

For Gaussian-mixture endpoints this package also carries the closed-form
marginal velocity: the posterior over components is a softmax of Gaussian
log-likelihoods and each component's posterior mean is a scalar blend of
mu_k and x (conjugacy of isotropic Gaussians). The oracle is the L2-optimal
velocity field, which makes it both a regression target for validation and
a lower bound on the eval loss.
"""

from dataclasses import dataclass

import numpy as np

from .flowfield import DivergenceError, velocity, velocity_backward, velocity_with_cache
from .gmmdata import Dataset, GmmSpec
from .nn import AdamState, adam_step
from .rng import Prng


@dataclass
class PathSample:
    """One conditional-path draw; x_t and u_target satisfy the interpolant law."""

    t: float
    x0: np.ndarray
    x1: np.ndarray
    x_t: np.ndarray
    u_target: np.ndarray


@dataclass
class PathBatch:
    t: np.ndarray         # (b,)
    x0: np.ndarray        # (b, n)
    x1: np.ndarray        # (b, n)
    x_t: np.ndarray       # (b, n)
    u_target: np.ndarray  # (b, n)

    def __len__(self) -> int:
        return self.t.shape[0]

    @classmethod
    def from_samples(cls, samples: list[PathSample]) -> "PathBatch":
        return cls(np.array([s.t for s in samples]),
                   np.stack([s.x0 for s in samples]),
                   np.stack([s.x1 for s in samples]),
                   np.stack([s.x_t for s in samples]),
                   np.stack([s.u_target for s in samples]))


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 256
    learning_rate: float = 1e-3
    seed: int = 0
    t_clamp: float = 1e-5
    determinism: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            # zero is allowed: it freezes parameters, a useful determinism probe
            raise ValueError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if not 0.0 < self.t_clamp < 0.5:
            raise ValueError(f"t_clamp must lie in (0, 0.5), got {self.t_clamp}")


def sample_path(rng: Prng, x1: np.ndarray, t_clamp: float = 1e-5) -> PathSample:
    """Draw (t, x0) for one data point; consumes one uniform then n normals."""
    x1 = np.asarray(x1, dtype=np.float64)
    t = rng.uniform() * (1.0 - t_clamp)
    x0 = rng.normals(x1.shape[0])
    x_t = (1.0 - t) * x0 + t * x1
    return PathSample(t, x0, x1, x_t, x1 - x0)


def sample_path_batch(rng: Prng, x1: np.ndarray, t_clamp: float = 1e-5) -> PathBatch:
    """Vectorized sample_path over the rows of x1; identical stream order."""
    x1 = np.asarray(x1, dtype=np.float64)
    us, x0 = rng.uniform_normal_records(x1.shape[0], x1.shape[1])
    t = us * (1.0 - t_clamp)
    assert np.all(t <= 1.0 - t_clamp), "path times escaped the clamp"
    x_t = (1.0 - t)[:, None] * x0 + t[:, None] * x1
    return PathBatch(t, x0, x1, x_t, x1 - x0)


def cfm_loss(model, batch) -> tuple[float, list[np.ndarray]]:
    """Mean squared velocity residual over the batch, with parameter gradients.

    Accepts a PathBatch or a list of PathSample. The gradient reduction is a
    single matrix contraction over the batch, so its summation order is
    fixed by the batch order.
    """
    if isinstance(batch, list):
        batch = PathBatch.from_samples(batch)
    if len(batch) == 0:
        raise ValueError("cfm_loss needs a non-empty batch")
    v, cache = velocity_with_cache(model, batch.x_t, batch.t)
    diff = v - batch.u_target
    per_sample = (diff * diff).sum(axis=1)
    if not np.all(np.isfinite(per_sample)):
        bad = int(np.argmax(~np.isfinite(per_sample)))
        raise DivergenceError(f"non-finite loss at batch sample {bad}")
    loss = float(per_sample.mean())
    grads = velocity_backward(model, cache, (2.0 / len(batch)) * diff)
    return loss, grads


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float  # running mean of batch losses over the epoch


def train(model, dataset: Dataset, config: TrainConfig,
          epoch_callback=None) -> tuple[object, list[EpochMetrics]]:
    """Adam on the conditional flow-matching objective.

    Data order is reshuffled every epoch from the config seed; every data
    point gets one fresh (t, x0) draw per epoch. The callback, when given,
    runs after each epoch as epoch_callback(epoch, model, train_loss).
    """
    if dataset.n_dim != model.n_dim:
        raise ValueError(f"dataset dimension {dataset.n_dim} does not match model {model.n_dim}")
    rng = Prng(config.seed)
    params = model.parameters()
    state = AdamState.for_params(params, learning_rate=config.learning_rate)
    history: list[EpochMetrics] = []
    count = dataset.count
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(count)
        shuffled = dataset.points[order]
        total, seen = 0.0, 0
        for start in range(0, count, config.batch_size):
            rows = shuffled[start:start + config.batch_size]
            batch = sample_path_batch(rng, rows, config.t_clamp)
            try:
                loss, grads = cfm_loss(model, batch)
            except DivergenceError as e:
                raise DivergenceError(
                    f"training diverged at epoch {epoch}, step {start // config.batch_size}: {e}") from e
            adam_step(params, grads, state)
            total += loss * len(rows)
            seen += len(rows)
        history.append(EpochMetrics(epoch, total / seen))
        if epoch_callback is not None:
            epoch_callback(epoch, model, history[-1].train_loss)
    return model, history


def eval_loss(model_or_field, dataset: Dataset, seed: int,
              draws_per_point: int = 1, chunk: int = 2048,
              t_clamp: float = 1e-5) -> float:
    """CFM loss over a dataset with fresh (t, x0) draws from the given seed.

    model_or_field is a model or a callable (x, t) -> velocity, which lets
    the closed-form oracle run through the same evaluation stream as a
    trained model.
    """
    if draws_per_point < 1:
        raise ValueError(f"draws_per_point must be >= 1, got {draws_per_point}")
    f = model_or_field if callable(model_or_field) else (
        lambda x, t: velocity(model_or_field, x, t))
    rng = Prng(seed)
    total = 0.0
    for _ in range(draws_per_point):
        for start in range(0, dataset.count, chunk):
            rows = dataset.points[start:start + chunk]
            batch = sample_path_batch(rng, rows, t_clamp)
            diff = f(batch.x_t, batch.t) - batch.u_target
            total += float((diff * diff).sum())
    return total / (dataset.count * draws_per_point)


# -- closed-form mixture velocity ---------------------------------------------


def marginal_velocity_oracle(spec: GmmSpec, t, x) -> np.ndarray:
    """Posterior-averaged velocity (E[x1 | x_t = x] - x) / (1 - t).

    Under the linear path with standard-normal base draws, x_t given
    component k is N(t mu_k, s2 I) with s2 = t^2 cov + (1-t)^2, and the
    posterior mean of x1 within component k blends mu_k toward x with gain
    t*cov/s2. Component responsibilities are a max-shifted softmax of the
    Gaussian log-likelihoods. Accepts a point (n,) or batch (b, n); t may be
    scalar or per-sample.
    """
    xa = np.asarray(x, dtype=np.float64)
    single = xa.ndim == 1
    if single:
        xa = xa[None, :]
    ta = np.asarray(t, dtype=np.float64)
    if ta.ndim == 0:
        ta = np.full(xa.shape[0], float(t))
    if np.any(ta >= 1.0) or np.any(ta < 0.0):
        raise ValueError("oracle requires 0 <= t < 1")
    means = spec.means()                                  # (k, n)
    cov = spec.cov_scale
    s2 = (ta * ta) * cov + (1.0 - ta) ** 2                # (b,)
    # log responsibilities (weights are equal, so the prior term is constant)
    sq = ((xa[:, None, :] - ta[:, None, None] * means[None, :, :]) ** 2).sum(axis=2)
    logs = -0.5 * sq / s2[:, None]
    logs -= logs.max(axis=1, keepdims=True)
    r = np.exp(logs)
    r /= r.sum(axis=1, keepdims=True)                     # (b, k)
    gain = ta * cov / s2                                  # (b,)
    post_mix = r @ means                                  # sum_k r_k mu_k
    e_x1 = gain[:, None] * xa + (1.0 - gain * ta)[:, None] * post_mix
    u = (e_x1 - xa) / (1.0 - ta)[:, None]
    return u[0] if single else u


def oracle_velocity(spec: GmmSpec):
    """The marginal oracle as an (x, t) -> v field, for eval_loss/integrate."""
    return lambda x, t: marginal_velocity_oracle(spec, t, x)
