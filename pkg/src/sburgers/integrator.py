"""Time stepping for the Galerkin system and its variation processes.

The scheme is a stochastic exponential Euler step

    X_{n+1} = e^{dt A} (X_n + dt B_M(X_n) + dW_n),

whose linear part is exact on the diagonal Laplacian, so there is no
stiffness constraint from the operator.  The tangent update freezes the
pre-step state X_n in the bilinear term, which makes it the exact Jacobian
of the one-step map; the second variation adds the bilinear source in the
propagated directions.  A tamed variant divides the drift by
(1 + dt ||B_M(X_n)||) as a blow-up fallback.

Sample paths that produce non-finite values are aborted and flagged, never
clamped, so failures cannot silently bias rate estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .fields import SpectralField, mode_symbols, project, semigroup_factors
from .noise import CovarianceModel, increment_matrix
from .nonlinearity import grid_intervals, grid_to_gradient_coeffs, sine_to_grid
from .rng import NoiseStream

SCHEMES = ("exponential-euler", "tamed-exponential-euler")


class BlowUpError(RuntimeError):
    """A sample path produced non-finite values and was aborted."""


@dataclass(frozen=True)
class SchemeConfig:
    dt: float
    scheme: str = "exponential-euler"
    M: int = 32
    T: float = 0.5

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.M < 1:
            raise ValueError(f"M must be positive, got {self.M}")
        if self.dt <= 0 or self.T < 0:
            raise ValueError("dt must be positive and T nonnegative")
        if self.T == 0:
            return  # evaluate-at-initial-time configuration; no stepping
        n = round(self.T / self.dt)
        if n < 1 or abs(n * self.dt - self.T) > 1e-12 * self.T:
            raise ValueError(f"dt={self.dt} does not divide T={self.T}")

    @property
    def steps(self):
        return round(self.T / self.dt)


@dataclass(frozen=True)
class SolverState:
    X: SpectralField
    eta_list: tuple = ()
    zeta: SpectralField | None = None
    n: int = 0
    dt: float = 0.0

    @property
    def t(self):
        return self.n * self.dt

    @classmethod
    def initial(cls, x0: SpectralField, cfg: SchemeConfig, directions=()):
        x = project(x0, cfg.M)
        if x.dimension < cfg.M:
            x = SpectralField(np.concatenate([x.coeffs, np.zeros(cfg.M - x.dimension)]))
        eta = tuple(
            SpectralField(np.concatenate([h.coeffs, np.zeros(cfg.M - h.dimension)]))
            if h.dimension < cfg.M else project(h, cfg.M)
            for h in directions
        )
        zeta = SpectralField.zero(cfg.M) if len(eta) >= 2 else None
        return cls(X=x, eta_list=eta, zeta=zeta, dt=cfg.dt)


def _drift(a, m, nonlinear=True):
    """B_M(x) for a batch of coefficient rows a."""
    if not nonlinear:
        return np.zeros_like(a)
    n = grid_intervals(m)
    v = sine_to_grid(a, n)
    return grid_to_gradient_coeffs(v * v, n, m)


def _tame(drift, dt):
    norms = np.linalg.norm(drift, axis=-1, keepdims=True)
    return drift / (1.0 + dt * norms)


def step(state: SolverState, cfg: SchemeConfig, dW: SpectralField) -> SolverState:
    """Advance X by one exponential Euler step; eta/zeta are untouched."""
    if dW.dimension != cfg.M:
        raise ValueError(f"dW has dimension {dW.dimension}, expected {cfg.M}")
    x = state.X.coeffs[None, :]
    b = _drift(x, cfg.M)
    if cfg.scheme == "tamed-exponential-euler":
        b = _tame(b, cfg.dt)
    e = semigroup_factors(cfg.M, cfg.dt)
    new = e * (x[0] + cfg.dt * b[0] + dW.coeffs)
    if not np.all(np.isfinite(new)):
        raise BlowUpError(f"non-finite state at step {state.n + 1} (t={state.t + cfg.dt:g})")
    return replace(state, X=SpectralField(new), n=state.n + 1, dt=cfg.dt)


def _bilinear_rows(x_row, other_rows, m):
    """2 B_M[x, v] for each row v, with x frozen."""
    n = grid_intervals(m)
    vx = sine_to_grid(x_row[None, :], n)
    vo = sine_to_grid(other_rows, n)
    return 2.0 * grid_to_gradient_coeffs(vx * vo, n, m)


def step_tangent(state: SolverState, cfg: SchemeConfig) -> SolverState:
    """Advance every tracked tangent direction using the pre-step X."""
    if not state.eta_list:
        raise ValueError("no tangent directions tracked")
    e = semigroup_factors(cfg.M, cfg.dt)
    rows = np.stack([h.coeffs for h in state.eta_list])
    coupled = _bilinear_rows(state.X.coeffs, rows, cfg.M)
    new = e * (rows + cfg.dt * coupled)
    if not np.all(np.isfinite(new)):
        raise BlowUpError(f"non-finite tangent at step {state.n + 1}")
    return replace(state, eta_list=tuple(SpectralField(r) for r in new))


def step_second_variation(state: SolverState, cfg: SchemeConfig) -> SolverState:
    """Advance zeta using the pre-step X and the pre-step (eta_g, eta_h)."""
    if state.zeta is None or len(state.eta_list) < 2:
        raise ValueError("second variation needs zeta and a tracked (g, h) pair")
    e = semigroup_factors(cfg.M, cfg.dt)
    n = grid_intervals(cfg.M)
    vx = sine_to_grid(state.X.coeffs[None, :], n)
    vz = sine_to_grid(state.zeta.coeffs[None, :], n)
    vg = sine_to_grid(state.eta_list[0].coeffs[None, :], n)
    vh = sine_to_grid(state.eta_list[1].coeffs[None, :], n)
    source = grid_to_gradient_coeffs(2.0 * vx * vz + 2.0 * vg * vh, n, cfg.M)
    new = e * (state.zeta.coeffs + cfg.dt * source[0])
    if not np.all(np.isfinite(new)):
        raise BlowUpError(f"non-finite second variation at step {state.n + 1}")
    return replace(state, zeta=SpectralField(new))


@dataclass
class TrajectoryRecord:
    """Observables of one path sampled on a time mesh, plus terminal data."""

    times: np.ndarray
    l2_norm: np.ndarray
    grad_norm: np.ndarray
    frac_norms: dict
    linf: np.ndarray
    dissipation: np.ndarray       # cumulative int ||grad X||^2 ds, left endpoint
    stochastic: np.ndarray        # cumulative sum <X_n, dW_n>
    terminal: SpectralField
    eta_terminal: tuple = ()
    zeta_terminal: SpectralField | None = None
    sup_l2: float = 0.0
    failed: bool = False


def evolve(x0: SpectralField, cfg: SchemeConfig, model: CovarianceModel,
           stream: NoiseStream, directions=(), frac_alphas=(),
           record_count=64, nonlinear=True) -> TrajectoryRecord:
    """Evolve one sample path to T and record mesh observables.

    The noise stream is addressed by (stream.seed, stream.sample, step);
    rerunning with the same address reproduces the record bit for bit.
    """
    scheme = "tamed-exponential-euler" if cfg.scheme == "tamed-exponential-euler" \
        else "exponential-euler"
    out = evolve_batch(
        x0.coeffs, [cfg.M], model, stream.seed, [stream.sample],
        cfg.steps, cfg.T, scheme=scheme, nonlinear=nonlinear,
        directions=[h.coeffs for h in directions],
        second_variation=len(directions) >= 2,
        record_count=record_count, record_levels=[cfg.M],
    )
    m = cfg.M
    mesh = out["mesh_states"][m][0]          # (R+1, M)
    sym = mode_symbols(m, 0.5)
    sym2 = sym * sym
    times = out["mesh_times"]
    l2 = np.linalg.norm(mesh, axis=-1)
    grad = np.sqrt(np.sum(sym2 * mesh**2, axis=-1))
    fracs = {
        a: np.sqrt(np.sum(mode_symbols(m, a) ** 2 * mesh**2, axis=-1))
        for a in frac_alphas
    }
    ngrid = 8 * m
    zgrid = np.arange(ngrid + 1) / ngrid
    basis = np.sqrt(2.0) * np.sin(np.pi * np.outer(zgrid, np.arange(1, m + 1)))
    linf = np.max(np.abs(mesh @ basis.T), axis=-1)
    eta = tuple(SpectralField(r) for r in out["eta"][:, 0, :]) if out["eta"] is not None else ()
    zeta = SpectralField(out["zeta"][0]) if out["zeta"] is not None else None
    return TrajectoryRecord(
        times=times, l2_norm=l2, grad_norm=grad, frac_norms=fracs, linf=linf,
        dissipation=out["mesh_dissipation"][m][0],
        stochastic=out["mesh_stochastic"][m][0],
        terminal=SpectralField(out["states"][m][0]) if not out["failed"][0]
        else SpectralField.zero(m),
        eta_terminal=eta, zeta_terminal=zeta,
        sup_l2=float(np.sqrt(out["sup_sq"][m][0])),
        failed=bool(out["failed"][0]),
    )


def evolve_batch(x0, levels, model, seed, samples, steps, T,
                 scheme="exponential-euler", nonlinear=True,
                 directions=(), second_variation=False,
                 record_count=0, record_levels=(), record_eta=False):
    """Evolve a batch of samples at several Galerkin levels on common noise.

    All levels consume projections of the same K-mode increments, so the
    cross-resolution coupling is exact by construction.  Tangent directions
    and the second variation are propagated at the finest level only and
    require a single entry in `levels`.

    Returns a dict with terminal states per level, per-sample energy
    accumulators, failure flags, and (optionally) states stored on a record
    mesh of `record_count` intervals.
    """
    levels = list(levels)
    if max(levels) > model.K:
        raise ValueError(f"level {max(levels)} exceeds noise truncation K={model.K}")
    samples = np.asarray(samples, dtype=np.uint64)
    b = samples.shape[0]
    x0 = np.asarray(x0, dtype=np.float64)
    dt = T / steps
    track_var = len(directions) > 0
    if track_var and len(levels) != 1:
        raise ValueError("tangent directions require a single Galerkin level")

    states, efac, sym2, grids = {}, {}, {}, {}
    sup_sq, diss, stoch = {}, {}, {}
    for m in levels:
        xm = np.zeros((b, m))
        top = min(m, x0.size)
        xm[:, :top] = x0[:top]
        states[m] = xm
        efac[m] = semigroup_factors(m, dt)
        sym2[m] = mode_symbols(m, 0.5) ** 2
        grids[m] = grid_intervals(m)
        sup_sq[m] = np.sum(xm**2, axis=-1)
        diss[m] = np.zeros(b)
        stoch[m] = np.zeros(b)
    failed = np.zeros(b, dtype=bool)

    eta = None
    zeta = None
    if track_var:
        m = levels[0]
        eta = np.zeros((len(directions), b, m))
        for i, h in enumerate(directions):
            h = np.asarray(h, dtype=np.float64)
            top = min(m, h.size)
            eta[i, :, :top] = h[:top]
        if second_variation:
            if len(directions) < 2:
                raise ValueError("second variation needs two directions (g, h)")
            zeta = np.zeros((b, m))

    rec_idx = {}
    mesh_times = None
    mesh_states = {m: None for m in levels}
    mesh_diss = {m: None for m in levels}
    mesh_stoch = {m: None for m in levels}
    eta_mesh = None
    if record_count:
        if steps % record_count:
            raise ValueError(f"record_count={record_count} must divide steps={steps}")
        stride = steps // record_count
        rec_idx = {(r + 1) * stride: r + 1 for r in range(record_count)}
        mesh_times = np.arange(record_count + 1) * (T / record_count)
        for m in record_levels:
            mesh_states[m] = np.zeros((b, record_count + 1, m))
            mesh_states[m][:, 0, :] = states[m]
            mesh_diss[m] = np.zeros((b, record_count + 1))
            mesh_stoch[m] = np.zeros((b, record_count + 1))
        if record_eta and eta is not None:
            eta_mesh = np.zeros((len(directions), b, record_count + 1, levels[0]))
            eta_mesh[:, :, 0, :] = eta

    tamed = scheme == "tamed-exponential-euler"
    for n in range(steps):
        dw_full = increment_matrix(model, dt, seed, samples, n)
        for m in levels:
            x = states[m]
            ng = grids[m]
            vx = None
            if nonlinear:
                vx = sine_to_grid(x, ng)
                drift = grid_to_gradient_coeffs(vx * vx, ng, m)
                if tamed:
                    drift = _tame(drift, dt)
            else:
                drift = 0.0
            dw = dw_full[:, :m]
            diss[m] += dt * np.sum(sym2[m] * x**2, axis=-1)
            stoch[m] += np.sum(x * dw, axis=-1)
            xnew = efac[m] * (x + dt * drift + dw)
            bad = ~np.all(np.isfinite(xnew), axis=-1)
            if np.any(bad):
                failed |= bad
                xnew[bad] = 0.0
            states[m] = xnew
            sup_sq[m] = np.maximum(sup_sq[m], np.sum(xnew**2, axis=-1))
            if eta is not None and nonlinear:
                if vx is None:
                    vx = sine_to_grid(x, ng)
                if zeta is not None:
                    vz = sine_to_grid(zeta, ng)
                    vg = sine_to_grid(eta[0], ng)
                    vh = sine_to_grid(eta[1], ng)
                    src = grid_to_gradient_coeffs(2.0 * vx * vz + 2.0 * vg * vh, ng, m)
                    zeta = efac[m] * (zeta + dt * src)
                new_eta = np.empty_like(eta)
                for i in range(eta.shape[0]):
                    ve = sine_to_grid(eta[i], ng)
                    coup = grid_to_gradient_coeffs(2.0 * vx * ve, ng, m)
                    new_eta[i] = efac[m] * (eta[i] + dt * coup)
                eta = new_eta
            elif eta is not None:
                if zeta is not None:
                    zeta = efac[m] * zeta
                eta = efac[m] * eta
        r = rec_idx.get(n + 1)
        if r is not None:
            for m in record_levels:
                mesh_states[m][:, r, :] = states[m]
                mesh_diss[m][:, r] = diss[m]
                mesh_stoch[m][:, r] = stoch[m]
            if eta_mesh is not None:
                eta_mesh[:, :, r, :] = eta

    if np.any(failed):
        for m in levels:
            states[m][failed] = 0.0

    return {
        "states": states,
        "failed": failed,
        "sup_sq": sup_sq,
        "dissipation": diss,
        "stochastic": stoch,
        "eta": eta,
        "zeta": zeta,
        "mesh_times": mesh_times,
        "mesh_states": mesh_states,
        "mesh_dissipation": mesh_diss,
        "mesh_stochastic": mesh_stoch,
        "eta_mesh": eta_mesh,
    }
