"""Controlled stochastic systems x_{t+1} = f(x_t, w_t) + u_t.

Scalar models (dim == 1) work on plain Python floats throughout the
simulation loop; multi-dimensional models work on numpy vectors. The
built-in library covers constant and state-dependent Jacobians:

    linear_model(a)     f(x,w) = a*x + w
    doubling_map()      f(x,w) = 2*x + w
    cubic_model()       f(x,w) = x + x**3/3 + w
    identity_model()    f(x,w) = x
    triangular_model()  f(x,w) = (2*x1 + sin(x2) + w1, 3*x2 + w2)

Noise and initial-state models carry their own seeded samplers; all
regularity constants (determinant lower bound, density bounds, compact
support) are declared up front and sample-checked, not proven.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from statistics import NormalDist
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidArgument, ModelContractError, NumericOverflow
from .rng import substream

OVERFLOW_GUARD = 1e12  # per-coordinate divergence threshold


# ---------------------------------------------------------------------------
# model, noise and initial-state descriptions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemModel:
    """Plant map f, its Jacobian and regularity constants.

    For dim == 1 the callables take and return floats and ``jacobian``
    returns the scalar derivative; otherwise they take/return numpy
    vectors and ``jacobian`` returns an (dim, dim) matrix.
    ``det_lower_bound`` is the declared c with |det Df_w(x)| > c
    everywhere; ``scalar_expansive`` asserts dim == 1 and |f'_w| >= 1.
    """

    name: str
    dim: int
    noise_dim: int
    f: Callable
    jacobian: Callable
    det_lower_bound: float
    scalar_expansive: bool = False
    check_budget: int = 0  # sample count used by check_model_contract

    def nominal(self, z):
        """Drift at the typical (zero) noise point, used by controllers."""
        if self.dim == 1:
            return self.f(z, 0.0) if self.noise_dim == 1 else self.f(z, np.zeros(self.noise_dim))
        return self.f(np.asarray(z, dtype=float), np.zeros(self.noise_dim))


@dataclass(frozen=True)
class NoiseModel:
    """I.i.d. noise source with a finite cell partition of its range.

    ``cell_edges`` (for 1-D Euclidean noise) are m+1 increasing reals;
    cell l is [e_l, e_{l+1}) with the top cell closed. ``cell_probs``
    are the nu(D_l), exact for the built-ins. ``prob_source`` records
    whether probabilities are exact or estimated and at what budget.
    """

    name: str
    dim: int
    n_cells: int
    cell_probs: np.ndarray
    cell_edges: Optional[np.ndarray] = None
    prob_source: str = "exact"
    amplitude: float = 0.0  # max |w| for bounded noise, an effective scale otherwise
    _sampler: Callable = field(default=None, repr=False)
    _cell_sampler: Callable = field(default=None, repr=False)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n i.i.d. noise points; shape (n,) for dim 1, else (n, dim)."""
        return self._sampler(rng, n)

    def sample_cell(self, cell: int, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n points conditioned on cell D_l (for per-cell infima)."""
        if not 0 <= cell < self.n_cells:
            raise InvalidArgument(f"noise cell {cell} out of range [0, {self.n_cells})")
        return self._cell_sampler(cell, rng, n)

    def cell_index(self, w) -> np.ndarray:
        """Map noise points to cell indices 0..m-1 (vectorized)."""
        w = np.atleast_1d(np.asarray(w, dtype=float))
        if self.cell_edges is None:
            return np.zeros(w.shape[0], dtype=np.int64)
        idx = np.searchsorted(self.cell_edges, w.ravel() if w.ndim == 1 else w[:, 0], side="right") - 1
        return np.clip(idx, 0, self.n_cells - 1)


@dataclass(frozen=True)
class InitialDistribution:
    """Law of the random initial state x_0.

    ``density`` evaluates the Lebesgue density; ``rho_max`` bounds it.
    When the support is a declared compact interval K, ``support`` is
    (lo, hi) and ``rho_min`` > 0 is the essential infimum on K.
    """

    name: str
    dim: int
    rho_max: float
    density: Callable
    support: Optional[tuple] = None
    rho_min: Optional[float] = None
    _sampler: Callable = field(default=None, repr=False)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self._sampler(rng, n)


@dataclass
class Trajectory:
    """One closed-loop run: states, noise, controls, channel symbols.

    Arrays share the realized horizon; ``diverged`` marks runs truncated
    by the overflow guard (divergence is an outcome, not an error).
    ``x[t+1] == f(x[t], w[t]) + u[t]`` holds exactly for stored entries.
    """

    x: np.ndarray
    w: np.ndarray
    u: np.ndarray
    q: np.ndarray
    qp: np.ndarray
    seed: Optional[int] = None
    diverged: bool = False
    model_name: str = ""

    @property
    def horizon(self) -> int:
        return self.x.shape[0]

    def states(self) -> np.ndarray:
        return self.x


def synthetic_trajectory(x, w=None) -> Trajectory:
    """Wrap raw state (and optional noise) arrays as a Trajectory.

    Used to feed externally constructed paths (i.i.d. baselines,
    frozen-constant counterexamples) into the occupation statistics.
    """
    x = np.asarray(x, dtype=float)
    T = x.shape[0]
    if w is None:
        w = np.zeros(T)
    else:
        w = np.asarray(w, dtype=float)
        if w.shape[0] != T:
            raise InvalidArgument("state and noise arrays must share a horizon")
    zeros = np.zeros_like(x)
    sym = np.zeros(T, dtype=np.int64)
    return Trajectory(x=x, w=w, u=zeros, q=sym, qp=sym.copy())


# ---------------------------------------------------------------------------
# core operations
# ---------------------------------------------------------------------------

def step(model: SystemModel, x, w, u):
    """One deterministic transition f(x, w) + u.

    Raises InvalidArgument on dimension mismatch and NumericOverflow if
    the result is not finite.
    """
    if model.dim == 1:
        out = model.f(float(x), w if model.noise_dim != 1 else float(w)) + float(u)
        if not math.isfinite(out):
            raise NumericOverflow(f"non-finite state from model '{model.name}'")
        return out
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (model.dim,) or u.shape != (model.dim,):
        raise InvalidArgument(
            f"state/control shape mismatch: expected ({model.dim},), got {x.shape} and {u.shape}"
        )
    out = model.f(x, np.asarray(w, dtype=float)) + u
    if not np.all(np.isfinite(out)):
        raise NumericOverflow(f"non-finite state from model '{model.name}'")
    return out


def log_det_jacobian(model: SystemModel, x, w) -> float:
    """log2 |det Df_w(x)| in bits; raises ModelContractError if singular."""
    if model.dim == 1:
        d = abs(float(model.jacobian(x, w)))
    else:
        jac = np.asarray(model.jacobian(np.asarray(x, dtype=float), np.asarray(w, dtype=float)))
        d = abs(float(np.linalg.det(jac)))
    if d <= 0.0:
        raise ModelContractError(
            f"singular Jacobian for model '{model.name}' (|det| = {d}); violates the declared bound"
        )
    return math.log2(d)


def run_closed_loop(
    model: SystemModel,
    policy,
    channel,
    x0,
    w_seq: np.ndarray,
    rng: Optional[np.random.Generator] = None,
    overflow_guard: float = OVERFLOW_GUARD,
    seed: Optional[int] = None,
) -> Trajectory:
    """Drive the encoder/channel/controller loop on a fixed noise realization.

    At each t the encoder sees x_t (plus its own memory and past channel
    feedback), the channel maps q_t to q'_t, and the controller emits u_t
    from q'_{[0,t]}. Divergence truncates the arrays and sets the flag.
    """
    from .channels import transmit  # local import to avoid a cycle

    T = w_seq.shape[0]
    if T < 1:
        raise InvalidArgument("horizon must be >= 1")
    if policy.input_alphabet != channel.input_size:
        raise InvalidArgument(
            f"policy alphabet {policy.input_alphabet} != channel input alphabet {channel.input_size}"
        )
    policy.reset()
    scalar = model.dim == 1
    xs, us, qs, qps = [], [], [], []
    x = float(x0) if scalar else np.asarray(x0, dtype=float).copy()
    diverged = False
    for t in range(T):
        xs.append(x)
        w = w_seq[t] if not scalar or model.noise_dim != 1 else float(w_seq[t])
        q = policy.encode(x)
        qp = transmit(channel, q, rng)
        u = policy.receive(qp)
        qs.append(q)
        qps.append(qp)
        us.append(u)
        if t == T - 1:
            break
        x_next = step(model, x, w, u)
        if scalar:
            if abs(x_next) > overflow_guard:
                diverged = True
                break
        elif np.any(np.abs(x_next) > overflow_guard):
            diverged = True
            break
        x = x_next
    n = len(xs)
    return Trajectory(
        x=np.asarray(xs, dtype=float),
        w=np.asarray(w_seq[:n], dtype=float),
        u=np.asarray(us, dtype=float),
        q=np.asarray(qs, dtype=np.int64),
        qp=np.asarray(qps, dtype=np.int64),
        seed=seed,
        diverged=diverged,
        model_name=model.name,
    )


def simulate(
    model: SystemModel,
    noise: NoiseModel,
    init: InitialDistribution,
    policy,
    channel,
    T: int,
    seed: int,
    overflow_guard: float = OVERFLOW_GUARD,
    path_index: int = 0,
) -> Trajectory:
    """Closed-loop trajectory, bit-reproducible from (seed, path_index).

    Substreams: ("init", i) for x_0, ("noise", i) for w, ("channel", i)
    for channel transitions, so ensembles can run in parallel without
    changing any path's realization.
    """
    if T < 1:
        raise InvalidArgument("horizon T must be >= 1")
    if model.noise_dim != noise.dim:
        raise InvalidArgument(f"model noise dim {model.noise_dim} != noise model dim {noise.dim}")
    x0 = init.sample(substream(seed, "init", path_index), 1)[0]
    w_seq = noise.sample(substream(seed, "noise", path_index), T)
    rng_ch = substream(seed, "channel", path_index)
    traj = run_closed_loop(
        model, policy, channel, x0, w_seq, rng_ch,
        overflow_guard=overflow_guard, seed=seed,
    )
    return traj


def simulate_ensemble(model, noise, init, policy, channel, T, seed, n_paths,
                      overflow_guard: float = OVERFLOW_GUARD) -> list:
    """Independent closed-loop paths i = 0..n_paths-1 from one master seed."""
    return [
        simulate(model, noise, init, policy, channel, T, seed,
                 overflow_guard=overflow_guard, path_index=i)
        for i in range(n_paths)
    ]


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write t, x[...], w, u[...], q, q' rows; deterministic formatting."""
    x = traj.x if traj.x.ndim == 2 else traj.x[:, None]
    u = traj.u if traj.u.ndim == 2 else traj.u[:, None]
    w = traj.w if traj.w.ndim == 2 else traj.w[:, None]
    n = x.shape[1]
    cols = ["t"] + [f"x{i}" for i in range(n)] + [f"w{j}" for j in range(w.shape[1])]
    cols += [f"u{i}" for i in range(n)] + ["q", "qp"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for t in range(traj.horizon):
            row = [str(t)]
            row += [repr(v) for v in x[t]]
            row += [repr(v) for v in w[t]]
            row += [repr(v) for v in u[t]]
            row += [str(traj.q[t]), str(traj.qp[t])]
            fh.write(",".join(row) + "\n")


# ---------------------------------------------------------------------------
# sampled contract checks
# ---------------------------------------------------------------------------

def finite_difference_jacobian(model: SystemModel, x, w, h: float = 1e-6):
    """Central finite differences of f at (x, w)."""
    if model.dim == 1:
        return (model.f(x + h, w) - model.f(x - h, w)) / (2 * h)
    x = np.asarray(x, dtype=float)
    jac = np.empty((model.dim, model.dim))
    for j in range(model.dim):
        dx = np.zeros(model.dim)
        dx[j] = h
        jac[:, j] = (model.f(x + dx, w) - model.f(x - dx, w)) / (2 * h)
    return jac


def check_model_contract(
    model: SystemModel,
    noise: NoiseModel,
    seed: int = 0,
    n_samples: int = 1000,
    state_scale: float = 5.0,
) -> SystemModel:
    """Sample-check (A3) injectivity, (A6) |det| > c, expansivity and the
    Jacobian against finite differences; returns the model with its
    recorded check budget. Raises ModelContractError on any violation.
    """
    rng = substream(seed, "model-init", model.name)
    ws = noise.sample(rng, n_samples)
    if model.dim == 1:
        xs = rng.uniform(-state_scale, state_scale, size=n_samples)
    else:
        xs = rng.uniform(-state_scale, state_scale, size=(n_samples, model.dim))
    for i in range(n_samples):
        x, w = xs[i], ws[i]
        if model.dim == 1:
            x = float(x)
            w = float(w) if model.noise_dim == 1 else w
        d = 2.0 ** log_det_jacobian(model, x, w)
        if not d > model.det_lower_bound:
            raise ModelContractError(
                f"|det Df| = {d} <= declared bound {model.det_lower_bound} at sample {i}"
            )
        if model.scalar_expansive:
            if model.dim != 1:
                raise ModelContractError("scalar_expansive requires dim == 1")
            if abs(model.jacobian(x, w)) < 1.0 - 1e-12:
                raise ModelContractError(f"|f'| = {abs(model.jacobian(x, w))} < 1 at sample {i}")
        fd = finite_difference_jacobian(model, x, w)
        an = model.jacobian(x, w)
        scale = max(1.0, float(np.max(np.abs(np.asarray(an)))))
        if float(np.max(np.abs(np.asarray(an) - np.asarray(fd)))) / scale > 1e-5:
            raise ModelContractError(f"Jacobian disagrees with finite differences at sample {i}")
    # sampled injectivity of f_w on well-separated pairs
    for i in range(0, n_samples - 1, 2):
        x1, x2, w = xs[i], xs[i + 1], ws[i]
        if model.dim == 1:
            x1, x2 = float(x1), float(x2)
            w = float(w) if model.noise_dim == 1 else w
            if abs(x1 - x2) >= 1e-6 and model.f(x1, w) == model.f(x2, w):
                raise ModelContractError(f"f_w not injective on sampled pair {i}")
        else:
            if np.linalg.norm(x1 - x2) >= 1e-6 and np.array_equal(model.f(x1, w), model.f(x2, w)):
                raise ModelContractError(f"f_w not injective on sampled pair {i}")
    return replace(model, check_budget=n_samples)


# ---------------------------------------------------------------------------
# built-in model library
# ---------------------------------------------------------------------------

def linear_model(a: float, name: Optional[str] = None) -> SystemModel:
    """Scalar f(x, w) = a*x + w; constant Jacobian a (a != 0)."""
    if a == 0:
        raise InvalidArgument("linear model needs a != 0 for a nonsingular Jacobian")
    a = float(a)
    return SystemModel(
        name=name or f"linear(a={a:g})",
        dim=1,
        noise_dim=1,
        f=lambda x, w: a * x + w,
        jacobian=lambda x, w: a,
        det_lower_bound=abs(a) * 0.5,
        scalar_expansive=abs(a) >= 1.0,
    )


def doubling_map() -> SystemModel:
    """Scalar f(x, w) = 2*x + w (mod-free doubling)."""
    return linear_model(2.0, name="doubling")


def identity_model() -> SystemModel:
    """Scalar f(x, w) = x; zero log-det everywhere."""
    return SystemModel(
        name="identity",
        dim=1,
        noise_dim=1,
        f=lambda x, w: x,
        jacobian=lambda x, w: 1.0,
        det_lower_bound=0.5,
        scalar_expansive=True,
    )


def cubic_model() -> SystemModel:
    """Scalar f(x, w) = x + x^3/3 + w; f' = 1 + x^2, state-dependent."""
    return SystemModel(
        name="cubic",
        dim=1,
        noise_dim=1,
        f=lambda x, w: x + x * x * x / 3.0 + w,
        jacobian=lambda x, w: 1.0 + x * x,
        det_lower_bound=0.9,
        scalar_expansive=True,
    )


def triangular_model() -> SystemModel:
    """2-D f(x, w) = (2*x1 + sin(x2) + w1, 3*x2 + w2); det Df = 6."""

    def f(x, w):
        return np.array([2.0 * x[0] + math.sin(x[1]) + w[0], 3.0 * x[1] + w[1]])

    def jac(x, w):
        return np.array([[2.0, math.cos(x[1])], [0.0, 3.0]])

    return SystemModel(
        name="triangular2d",
        dim=2,
        noise_dim=2,
        f=f,
        jacobian=jac,
        det_lower_bound=3.0,
    )


MODEL_FACTORIES = {
    "linear": linear_model,
    "doubling": doubling_map,
    "identity": identity_model,
    "cubic": cubic_model,
    "triangular2d": triangular_model,
}


# ---------------------------------------------------------------------------
# built-in noise and initial-state models
# ---------------------------------------------------------------------------

def uniform_noise(low: float, high: float, cells: int = 1) -> NoiseModel:
    """Scalar U[low, high] noise split into equal-width cells (exact probs)."""
    if not high > low:
        raise InvalidArgument("uniform noise needs high > low")
    if cells < 1:
        raise InvalidArgument("need at least one noise cell")
    edges = np.linspace(low, high, cells + 1)

    def sampler(rng, n):
        return rng.uniform(low, high, size=n)

    def cell_sampler(cell, rng, n):
        return rng.uniform(edges[cell], edges[cell + 1], size=n)

    return NoiseModel(
        name=f"uniform[{low:g},{high:g}]x{cells}",
        dim=1,
        n_cells=cells,
        cell_probs=np.full(cells, 1.0 / cells),
        cell_edges=edges,
        amplitude=max(abs(low), abs(high)),
        _sampler=sampler,
        _cell_sampler=cell_sampler,
    )


def no_noise(dim: int = 1) -> NoiseModel:
    """Degenerate point mass at 0 (one cell of probability 1)."""

    def sampler(rng, n):
        return np.zeros(n) if dim == 1 else np.zeros((n, dim))

    return NoiseModel(
        name="none",
        dim=dim,
        n_cells=1,
        cell_probs=np.array([1.0]),
        cell_edges=None,
        _sampler=sampler,
        _cell_sampler=lambda cell, rng, n: sampler(rng, n),
    )


def gaussian_noise(sigma: float, cells: int = 1) -> NoiseModel:
    """Scalar N(0, sigma^2) noise with equal-probability quantile cells."""
    if sigma <= 0:
        raise InvalidArgument("sigma must be positive")
    nd = NormalDist(0.0, sigma)
    qs = [nd.inv_cdf(k / cells) for k in range(1, cells)]
    edges = np.array([-np.inf] + qs + [np.inf])

    def sampler(rng, n):
        return rng.normal(0.0, sigma, size=n)

    def cell_sampler(cell, rng, n):
        lo_p, hi_p = cell / cells, (cell + 1) / cells
        u = rng.uniform(lo_p, hi_p, size=n)
        return np.array([nd.inv_cdf(min(max(v, 1e-12), 1 - 1e-12)) for v in u])

    return NoiseModel(
        name=f"gaussian(sigma={sigma:g})x{cells}",
        dim=1,
        n_cells=cells,
        cell_probs=np.full(cells, 1.0 / cells),
        cell_edges=edges,
        amplitude=3.0 * sigma,
        _sampler=sampler,
        _cell_sampler=cell_sampler,
    )


def uniform_init(low, high) -> InitialDistribution:
    """Uniform initial state on [low, high] (interval or box); compact K."""
    low_a = np.atleast_1d(np.asarray(low, dtype=float))
    high_a = np.atleast_1d(np.asarray(high, dtype=float))
    if low_a.shape != high_a.shape or np.any(high_a <= low_a):
        raise InvalidArgument("uniform init needs elementwise high > low")
    dim = low_a.shape[0]
    vol = float(np.prod(high_a - low_a))
    dens = 1.0 / vol

    def density(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return dens if np.all((x >= low_a) & (x <= high_a)) else 0.0

    def sampler(rng, n):
        out = rng.uniform(low_a, high_a, size=(n, dim))
        return out[:, 0] if dim == 1 else out

    support = (float(low_a[0]), float(high_a[0])) if dim == 1 else (low_a, high_a)
    return InitialDistribution(
        name=f"uniform-init[{low},{high}]",
        dim=dim,
        rho_max=dens,
        density=density,
        support=support,
        rho_min=dens,
        _sampler=sampler,
    )


def gaussian_init(sigma: float, dim: int = 1) -> InitialDistribution:
    """Centred Gaussian initial state; bounded density, unbounded support."""
    if sigma <= 0:
        raise InvalidArgument("sigma must be positive")
    norm = 1.0 / (sigma * math.sqrt(2 * math.pi)) ** dim

    def density(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return norm * math.exp(-0.5 * float(np.sum(x * x)) / sigma**2)

    def sampler(rng, n):
        out = rng.normal(0.0, sigma, size=(n, dim))
        return out[:, 0] if dim == 1 else out

    return InitialDistribution(
        name=f"gaussian-init(sigma={sigma:g})",
        dim=dim,
        rho_max=norm,
        density=density,
        _sampler=sampler,
    )
