"""Digital twin of the adiabatic-passage tomography experiment.

Per momentum point the simulated run is: build the three-segment microwave
ramp that carries the spin from |0> to the ground state of the normalized
target Hamiltonian, integrate the rotating-frame Schrodinger equation with
exact 2x2 step propagators, draw photon-shot-noise Pauli measurements, and
reconstruct the density matrix by maximum-likelihood tomography.  A campaign
runs that pipeline over a whole mesh with per-site counter-based random
streams, so results are reproducible and independent of scheduling order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import model
from .bzgrid import PROVENANCE_SIMULATED, StateField
from .errors import HopfError, NonConvergence

OMEGA_MAX = 2.0 * np.pi * 20.83e6  # rad/s, the peak Rabi frequency
SEGMENT_DURATION = 500e-9  # s per linear ramp
SAMPLE_RATE = 8e9  # Hz, waveform sampling
DEFAULT_PHOTONS = 93_000

BASES = ("x", "y", "z")


@dataclass(frozen=True)
class RampSchedule:
    """Piecewise-linear control waveform (|Omega|, phi, Delta) for one passage.

    Three equal segments: transverse ramp-up at fixed detuning, detuning ramp,
    transverse ramp-down to the target; phi is constant throughout.  Samples
    live on a uniform grid at ``sample_dt`` spacing (materialized on demand).
    """

    phi: float
    delta_start: float
    delta_final: float
    omega_peak: float
    omega_final: float
    segment_duration: float = SEGMENT_DURATION
    sample_dt: float = 1.0 / SAMPLE_RATE

    @property
    def duration(self):
        return 3.0 * self.segment_duration

    @property
    def boundaries(self):
        return (self.segment_duration, 2.0 * self.segment_duration)

    def controls(self, t):
        """(|Omega|, phi, Delta) at times t (piecewise-linear interpolation)."""
        t = np.asarray(t, dtype=float)
        seg = self.segment_duration
        om = np.interp(
            t,
            [0.0, seg, 2 * seg, 3 * seg],
            [0.0, self.omega_peak, self.omega_peak, self.omega_final],
        )
        de = np.interp(
            t,
            [0.0, seg, 2 * seg, 3 * seg],
            [self.delta_start, self.delta_start, self.delta_final, self.delta_final],
        )
        return om, np.full_like(t, self.phi), de

    def samples(self):
        """Control tuples on the uniform sample grid, (t, |Omega|, phi, Delta)."""
        nsteps = int(round(self.duration / self.sample_dt))
        t = np.arange(nsteps + 1) * self.sample_dt
        om, ph, de = self.controls(t)
        return t, om, ph, de


def build_schedule(k, params, omega_max=OMEGA_MAX, segment_duration=SEGMENT_DURATION,
                   sample_rate=SAMPLE_RATE):
    """Ramp schedule preparing the ground state of the normalized H_k.

    The target Hamiltonian is scaled so max(|transverse|, |uz|) equals the
    peak Rabi frequency; the passage starts from |Omega| = 0 at detuning
    -omega_max (ground state |0>) and ends with controls parallel to u(k).

    Raises
    ------
    GaplessPoint
        If |u(k)| vanishes.
    """
    u = model.u_of_k(k, params)
    norm = float(np.linalg.norm(u))
    if norm < model.GAP_TOL:
        from .errors import GaplessPoint

        raise GaplessPoint(f"cannot build a passage onto a gapless point k={k}", k=k)
    trans = float(np.hypot(u[..., 0], u[..., 1]))
    scale = omega_max / max(trans, abs(float(u[..., 2])))
    return RampSchedule(
        phi=float(np.arctan2(u[..., 1], u[..., 0])),
        delta_start=-omega_max,
        delta_final=float(u[..., 2]) * scale,
        omega_peak=omega_max,
        omega_final=trans * scale,
        segment_duration=segment_duration,
        sample_dt=1.0 / sample_rate,
    )


def _step_unitaries(om, ph, de, dt):
    """Exact exponentials exp(-i dt v.sigma) for control samples, (m, 2, 2)."""
    vx, vy, vz = om * np.cos(ph), om * np.sin(ph), de
    vnorm = np.sqrt(vx * vx + vy * vy + vz * vz)
    theta = vnorm * dt
    sinc = np.where(vnorm > 0, np.sin(theta) / np.where(vnorm > 0, vnorm, 1.0), dt)
    c = np.cos(theta)
    u = np.empty(om.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = c - 1j * vz * sinc
    u[..., 0, 1] = (-1j * vx - vy) * sinc
    u[..., 1, 0] = (-1j * vx + vy) * sinc
    u[..., 1, 1] = c + 1j * vz * sinc
    return u


def _product_reduce(us):
    """Time-ordered product of a stack of 2x2 matrices (last index = latest)."""
    if us.shape[0] == 0:
        return np.eye(2, dtype=complex)
    while us.shape[0] > 1:
        m = us.shape[0]
        if m % 2:
            head, rest = us[:1], us[1:]
        else:
            head, rest = us[:0], us
        paired = np.matmul(rest[1::2], rest[0::2])
        us = np.concatenate([head, paired]) if head.size else paired
    return us[0]


def propagator(schedule, dt=None):
    """Total unitary of a schedule from midpoint-sampled exact 2x2 steps."""
    if dt is None:
        dt = schedule.sample_dt
    if dt > schedule.sample_dt * (1 + 1e-12):
        raise ValueError(
            f"dt={dt} exceeds the schedule sampling interval {schedule.sample_dt}"
        )
    nsteps = int(round(schedule.duration / dt))
    mid = (np.arange(nsteps) + 0.5) * dt
    om, ph, de = schedule.controls(mid)
    return _product_reduce(_step_unitaries(om, ph, de, dt))


def evolve(schedule, initial, dt=None):
    """Final state of the passage; exactly norm-preserving per step."""
    initial = np.asarray(initial, dtype=complex)
    if abs(np.linalg.norm(initial) - 1.0) > 1e-9:
        raise ValueError("initial state must be normalized")
    if schedule.duration == 0:
        return initial.copy()
    return propagator(schedule, dt) @ initial


def fidelity(rho_or_psi, reference):
    """Overlap <ref|rho|ref> (or |<ref|psi>|^2 for pure states)."""
    reference = np.asarray(reference, dtype=complex)
    state = np.asarray(rho_or_psi, dtype=complex)
    if state.shape == (2,):
        return float(np.abs(np.vdot(reference, state)) ** 2)
    return float(np.real(np.conj(reference) @ state @ reference))


# ---------------------------------------------------------------------------
# photon shot-noise measurements

@dataclass(frozen=True)
class MeasurementRecord:
    """Per-basis shot allocations and success counts for one site."""

    shots: dict
    successes: dict
    key: tuple

    def frequencies(self):
        return {b: self.successes[b] / self.shots[b] for b in BASES}


def _philox(key):
    key = tuple(int(x) for x in (key if isinstance(key, (tuple, list)) else (key, 0)))
    return np.random.Generator(np.random.Philox(key=np.array(key, dtype=np.uint64)))


def split_photons(photons):
    """Equal thirds across the x, y, z bases, remainder assigned to z."""
    third = photons // 3
    return {"x": third, "y": third, "z": photons - 2 * third}


def bloch_of_state(state):
    state = np.asarray(state, dtype=complex)
    if state.shape == (2,):
        a, b = state
        cross = np.conj(a) * b
        return np.array([2 * cross.real, 2 * cross.imag, abs(a) ** 2 - abs(b) ** 2])
    return np.array(
        [
            2 * state[0, 1].real,
            -2 * state[0, 1].imag,
            (state[0, 0] - state[1, 1]).real,
        ]
    )


def simulate_measurements(state, photons, split=None, seed=0):
    """Binomial photon counts in the three Pauli bases.

    Success probability per basis is (1 + <sigma_basis>)/2; the draw is a
    counter-based stream keyed by ``seed`` (an int or an int pair), so equal
    keys reproduce identical records regardless of call order.
    """
    photons = int(photons)
    if photons < 3:
        raise ValueError(f"need at least 3 photons, got {photons}")
    shots = dict(split) if split is not None else split_photons(photons)
    if set(shots) != set(BASES) or any(shots[b] < 1 for b in BASES):
        raise ValueError(f"allocation must cover all three bases, got {shots}")
    s = bloch_of_state(state)
    rng = _philox(seed)
    successes = {}
    for i, b in enumerate(BASES):
        p = float(np.clip((1.0 + s[i]) / 2.0, 0.0, 1.0))
        successes[b] = int(rng.binomial(shots[b], p))
    key = tuple(int(x) for x in (seed if isinstance(seed, (tuple, list)) else (seed, 0)))
    return MeasurementRecord(shots=shots, successes=successes, key=key)


# ---------------------------------------------------------------------------
# maximum-likelihood tomography

@dataclass
class TomographyResult:
    rho: np.ndarray
    fidelity: float | None
    photons: int
    loglik: float
    iterations: int
    converged: bool


def _loglik(r, record):
    total = 0.0
    for i, b in enumerate(BASES):
        p = min(max((1.0 + r[i]) / 2.0, 1e-300), 1.0 - 1e-16)
        s, n = record.successes[b], record.shots[b]
        total += s * np.log(p) + (n - s) * np.log1p(-p)
    return total


def _rho_of_chol(params):
    l00, l10r, l10i, l11 = params
    low = np.array([[l00, 0.0], [l10r + 1j * l10i, l11]], dtype=complex)
    rho = low.conj().T @ low
    return rho / np.trace(rho).real


def _chol_of_rho(rho):
    # closed-form factor rho = L^dag L, L = [[a, 0], [c, b]], small cushion
    # keeps the factorization finite on the pure-state boundary
    rho = rho + 1e-14 * np.eye(2)
    b = np.sqrt(rho[1, 1].real)
    c = np.conj(rho[0, 1]) / b
    a = np.sqrt(max(rho[0, 0].real - abs(c) ** 2, 0.0))
    return np.array([a, c.real, c.imag, b])


def _derivatives(objective, params, eps=1e-5):
    """Central-difference gradient and Hessian of a scalar function of R^4."""
    grad = np.empty(4)
    hess = np.empty((4, 4))
    f0 = objective(params)
    for i in range(4):
        ei = np.zeros(4)
        ei[i] = eps
        fp, fm = objective(params + ei), objective(params - ei)
        grad[i] = (fp - fm) / (2 * eps)
        hess[i, i] = (fp - 2 * f0 + fm) / eps**2
    for i in range(4):
        for j in range(i + 1, 4):
            ei, ej = np.zeros(4), np.zeros(4)
            ei[i] = eps
            ej[j] = eps
            hess[i, j] = hess[j, i] = (
                objective(params + ei + ej)
                - objective(params + ei - ej)
                - objective(params - ei + ej)
                + objective(params - ei - ej)
            ) / (4 * eps**2)
    return grad, hess


def mle_tomography(record, reference=None, max_iter=500, tol=1e-12):
    """Physical density matrix maximizing the binomial likelihood.

    The state is parameterized as L^dag L / tr(L^dag L) with lower-triangular
    L, climbed by gradient ascent with backtracking from the (projected)
    linear-inversion estimate; converged when the log-likelihood improves by
    less than ``tol``.

    Raises
    ------
    NonConvergence
        After max_iter iterations; the exception carries the best iterate.
    """
    if any(record.shots[b] < 1 for b in BASES):
        raise ValueError("every basis needs at least one shot")
    freq = record.frequencies()
    r_hat = np.array([2.0 * freq[b] - 1.0 for b in BASES])
    r_norm = np.linalg.norm(r_hat)
    r0 = r_hat if r_norm <= 1.0 else r_hat / r_norm * (1.0 - 1e-12)
    rho0 = 0.5 * (
        np.eye(2)
        + r0[0] * np.array([[0, 1], [1, 0]])
        + r0[1] * np.array([[0, -1j], [1j, 0]])
        + r0[2] * np.array([[1, 0], [0, -1]])
    )
    params = _chol_of_rho(rho0)

    def objective(p):
        return _loglik(bloch_of_state(_rho_of_chol(p)), record)

    current = objective(params)
    lam = 1e-3  # damping; grows on rejected steps (backtracking), shrinks on accepts
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        grad, hess = _derivatives(objective, params)
        if np.linalg.norm(grad) == 0.0:
            converged = True
            break
        accepted = False
        for _ in range(60):
            try:
                step = np.linalg.solve(-hess + lam * np.eye(4), grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = params + step
            value = objective(cand)
            if value > current:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            converged = True
            break
        improvement = value - current
        params, current = cand, value
        norm = np.linalg.norm(params)
        if norm > 0:
            params = params / norm  # rho is scale-invariant in the factor
        lam = max(lam / 10.0, 1e-12)
        if improvement < tol:
            converged = True
            break

    rho = _rho_of_chol(params)
    rho = 0.5 * (rho + rho.conj().T)
    result = TomographyResult(
        rho=rho,
        fidelity=None if reference is None else fidelity(rho, reference),
        photons=sum(record.shots.values()),
        loglik=current,
        iterations=iterations,
        converged=converged,
    )
    if not converged:
        raise NonConvergence(
            f"tomography did not converge in {max_iter} iterations", best=result
        )
    return result


# ---------------------------------------------------------------------------
# full campaign over a mesh

@dataclass
class FidelityStats:
    mean: float
    median: float
    ci95: tuple
    per_site: np.ndarray
    histogram: tuple
    errors: list = field(default_factory=list)

    def to_dict(self):
        counts, edges = self.histogram
        per_site = [
            float(x) if np.isfinite(x) else None for x in self.per_site.ravel()
        ]
        return {
            "mean_fidelity": self.mean,
            "median_fidelity": self.median,
            "ci95": list(self.ci95),
            "per_site": per_site,
            "histogram": {"counts": counts.tolist(), "edges": edges.tolist()},
            "errors": [list(map(str, e)) for e in self.errors],
        }


@dataclass
class CampaignResult:
    field: StateField
    stats: FidelityStats


def _site_pipeline(args):
    params, k, photons, key, dt = args
    try:
        schedule = build_schedule(k, params)
        final = evolve(schedule, np.array([1.0, 0.0], dtype=complex), dt)
        record = simulate_measurements(final, photons, seed=key)
        reference = model.ground_state(k, params)
        tomo = mle_tomography(record, reference=reference)
        return tomo.rho, tomo.fidelity, None
    except NonConvergence as err:
        best = err.best
        return best.rho, fidelity(best.rho, reference), err
    except HopfError as err:
        # a failed site keeps the campaign going: maximally mixed placeholder
        return 0.5 * np.eye(2, dtype=complex), np.nan, err


def run_campaign(params, mesh, photons_per_site=DEFAULT_PHOTONS, seed=0,
                 threads=1, dt=None):
    """Simulated tomography of every mesh site.

    Per-site random streams derive from (seed, row-major site index), so the
    output depends only on the inputs and never on worker scheduling.
    Site-level failures are collected in the stats and leave the best
    available reconstruction in the field.
    """
    n = mesh.n
    sites = [(jx, jy, jz) for jx in range(n) for jy in range(n) for jz in range(n)]
    tasks = [
        (params, mesh.site_k(site), photons_per_site,
         (seed, (site[0] * n + site[1]) * n + site[2]), dt)
        for site in sites
    ]

    if threads == 0:
        import os

        threads = min(len(tasks), os.cpu_count() or 1)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_site_pipeline, tasks))
    else:
        results = [_site_pipeline(t) for t in tasks]

    rho = np.empty((n, n, n, 2, 2), dtype=complex)
    fids = np.empty((n, n, n))
    errors = []
    for site, (r, fid, err) in zip(sites, results):
        rho[site] = r
        fids[site] = fid
        if err is not None:
            errors.append((site, err))

    field = StateField(mesh, params, rho, provenance=PROVENANCE_SIMULATED)
    valid = fids.ravel()
    valid = valid[np.isfinite(valid)]
    if valid.size == 0:
        raise HopfError("every site of the campaign failed")
    edges = np.linspace(0.0, 1.0, 201)
    stats = FidelityStats(
        mean=float(valid.mean()),
        median=float(np.median(valid)),
        ci95=(float(np.percentile(valid, 2.5)), float(np.percentile(valid, 97.5))),
        per_site=fids,
        histogram=(np.histogram(valid, bins=edges)[0], edges),
        errors=errors,
    )
    return CampaignResult(field=field, stats=stats)
