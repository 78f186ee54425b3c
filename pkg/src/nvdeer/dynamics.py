"""Lab-frame time propagation of driven spin systems.

No rotating-wave approximation anywhere: the drive enters as the real
linear term H1(t) = 2*Omega*sin(2 pi f_B t)*(e1.S) and the propagator is
integrated in the lab frame.  Two integrator paths:

* "ode": scipy solve_ivp (DOP853) on the unitary, rtol 1e-8 by default,
  max step bounded by 1/(20 f_B) so the carrier is always resolved.
  The reference path.
* "magnus": a fixed-step three-node Gauss-Legendre commutator-corrected
  (sixth-order Magnus) propagator with dt = 1/(substeps * f_B),
  substeps = 40 by default.  One Hermitian eigendecomposition per step,
  batchable over many drive frequencies at once, which is what makes
  full DEER spectra affordable.  Agrees with the ode path to better than
  1e-6 on the propagator entries at the default settings over any
  in-scope duration (a plain midpoint rule stalls near 2e-4, and the
  two-node fourth-order step only reaches ~1e-6 per 0.1 us).

Transition probabilities are always computed from pure initial
eigenstates, P = 1 - |<i|U|i>|^2, and spectra are population-weighted
sums of those over the ensemble members.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.integrate import solve_ivp

from . import photophysics
from .errors import IntegrationError
from .hamiltonians import (allowed_transitions, apply_orientation,
                           drive_amplitude_matrix, electron_spin_operators,
                           static_hamiltonian)
from .spincore import eigensystem, spin_operators
from .trace import SpectrumTrace

__all__ = [
    "SinusoidalDrive",
    "propagate_unitary",
    "propagate",
    "transition_probability",
    "transition_spectrum",
    "ensemble_transfer",
    "simulate_rabi",
    "compute_sigma",
    "num_threads",
]

# Gauss-Legendre nodes on [0, 1] for the sixth-order step
_GL1 = 0.5 - np.sqrt(15.0) / 10.0
_GL2 = 0.5
_GL3 = 0.5 + np.sqrt(15.0) / 10.0


def num_threads():
    """Worker count for frequency-grid chunking.

    NVDEER_THREADS overrides; the default is the available parallelism.
    """
    raw = os.environ.get("NVDEER_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"NVDEER_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ValueError("NVDEER_THREADS must be >= 1")
    return n


class SinusoidalDrive:
    """Linear drive amp_matrix * sin(2 pi freq t), the shape both
    integrator paths understand.  Callable as h1(t) for the generic path.
    """

    def __init__(self, amp_matrix, freq_mhz):
        amp = np.asarray(amp_matrix, dtype=complex)
        if amp.ndim != 2 or amp.shape[0] != amp.shape[1]:
            raise ValueError("amp_matrix must be square")
        if freq_mhz <= 0:
            raise ValueError("freq_mhz must be > 0")
        self.amp_matrix = amp
        self.freq_mhz = float(freq_mhz)

    def __call__(self, t_us):
        return self.amp_matrix * np.sin(2 * np.pi * self.freq_mhz * t_us)

    @classmethod
    def for_member(cls, system, field):
        """Drive of one ensemble member at the field's carrier frequency."""
        return cls(drive_amplitude_matrix(system, field), field.drive_freq_mhz)


def _propagate_ode(h0, drive, duration_us, rtol):
    d = h0.shape[0]
    if isinstance(drive, SinusoidalDrive):
        freq = drive.freq_mhz
        h1 = drive
    else:
        h1 = drive
        freq = None

    def rhs(t, y):
        u = y.reshape(d, d)
        h = h0 + h1(t)
        return (-2j * np.pi * (h @ u)).ravel()

    max_step = np.inf if freq is None else 1.0 / (20.0 * freq)
    sol = solve_ivp(rhs, (0.0, duration_us),
                    np.eye(d, dtype=complex).ravel(),
                    method="DOP853", rtol=rtol, atol=1e-12,
                    max_step=max_step, dense_output=False)
    if not sol.success:
        raise IntegrationError(f"ODE propagation failed: {sol.message}")
    u = sol.y[:, -1].reshape(d, d)
    if not np.all(np.isfinite(u)):
        raise IntegrationError("ODE propagation produced non-finite entries")
    return u


def _commutator(x, y):
    return x @ y - y @ x


def _magnus_steps(h0, v_amp, freqs, t0_us, duration_us, dt_us, u):
    """Advance batched unitaries u (nf, d, d) by duration with step dt.

    Sixth-order Magnus step built from the Hamiltonian at the three
    Gauss-Legendre nodes of each step (Blanes/Casas/Oteo/Ros scheme):
    with a_k = -2 pi i dt H(t_k),

        b1 = a2
        b2 = sqrt(15)/3 (a3 - a1)
        b3 = 10/3 (a3 - 2 a2 + a1)
        c1 = [b1, b2]
        c2 = -1/60 [b1, 2 b3 + c1]
        Omega = b1 + b3/12 + 1/240 [-20 b1 - b3 + c1, b2 + c2]

    Omega is anti-Hermitian, so exp(Omega) is evaluated exactly through
    one Hermitian eigendecomposition of i Omega / (2 pi dt) per step.
    freqs is the per-batch drive frequency array.
    """
    n = max(int(np.ceil(duration_us / dt_us - 1e-12)), 1)
    dt = duration_us / n
    w2p = 2 * np.pi * freqs
    scale = -2j * np.pi * dt
    for k in range(n):
        t = t0_us + k * dt
        s1 = np.sin(w2p * (t + _GL1 * dt))[:, None, None]
        s2 = np.sin(w2p * (t + _GL2 * dt))[:, None, None]
        s3 = np.sin(w2p * (t + _GL3 * dt))[:, None, None]
        b1 = scale * (h0 + s2 * v_amp)
        b2 = (np.sqrt(15.0) / 3.0) * scale * ((s3 - s1) * v_amp)
        b3 = (10.0 / 3.0) * scale * ((s3 - 2.0 * s2 + s1) * v_amp)
        c1 = _commutator(b1, b2)
        c2 = (-1.0 / 60.0) * _commutator(b1, 2.0 * b3 + c1)
        omega = (b1 + b3 / 12.0
                 + _commutator(-20.0 * b1 - b3 + c1, b2 + c2) / 240.0)
        heff = omega / scale
        heff = 0.5 * (heff + np.swapaxes(heff.conj(), 1, 2))
        w, vecs = np.linalg.eigh(heff)
        phase = np.exp(-2j * np.pi * w * dt)
        u = vecs @ (phase[:, :, None] * (np.swapaxes(vecs.conj(), 1, 2) @ u))
    return u


def _propagate_magnus(h0, drive, duration_us, substeps):
    freqs = np.array([drive.freq_mhz])
    d = h0.shape[0]
    u = np.eye(d, dtype=complex)[None, :, :].copy()
    dt = 1.0 / (substeps * drive.freq_mhz)
    u = _magnus_steps(h0[None, :, :], drive.amp_matrix[None, :, :],
                      freqs, 0.0, duration_us, dt, u)
    return u[0]


def propagate_unitary(h0, drive, duration_us, method="magnus",
                      substeps=40, rtol=1e-8):
    """Propagator U(duration) for H(t) = h0 + drive(t).

    Parameters
    ----------
    h0 : (d, d) Hermitian static Hamiltonian, MHz.
    drive : SinusoidalDrive, or any callable t_us -> (d, d) array
        (generic callables force the ode path).
    duration_us : float
    method : "magnus" | "ode"
    substeps : int
        Magnus steps per drive period (>= 2).
    rtol : float
        ODE relative tolerance.
    """
    h0 = np.asarray(h0, dtype=complex)
    if duration_us < 0:
        raise ValueError("duration_us must be >= 0")
    if duration_us == 0:
        return np.eye(h0.shape[0], dtype=complex)
    if method == "ode":
        return _propagate_ode(h0, drive, duration_us, rtol)
    if method == "magnus":
        if not isinstance(drive, SinusoidalDrive):
            raise ValueError("magnus path needs a SinusoidalDrive; "
                             "use method='ode' for generic drives")
        if substeps < 2:
            raise ValueError("substeps must be >= 2")
        return _propagate_magnus(h0, drive, duration_us, substeps)
    raise ValueError(f"unknown method {method!r}")


def _check_density(rho, tol=1e-8):
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("rho must be a square matrix")
    if np.abs(rho - rho.conj().T).max() > tol:
        raise ValueError("rho must be Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > 1e-6:
        raise ValueError(f"rho must have unit trace, got {tr}")
    return rho


def propagate(h0, drive, rho0, duration_us, method="magnus", substeps=40,
              rtol=1e-8):
    """Evolve a density matrix: rho -> U rho U^dagger."""
    rho0 = _check_density(rho0)
    u = propagate_unitary(h0, drive, duration_us, method=method,
                          substeps=substeps, rtol=rtol)
    return u @ rho0 @ u.conj().T


def transition_probability(rho_i, rho_f):
    """Leave probability 1 - Tr(rho_i rho_f) for a pure initial state."""
    rho_i = np.asarray(rho_i, dtype=complex)
    rho_f = np.asarray(rho_f, dtype=complex)
    if rho_i.shape != rho_f.shape:
        raise ValueError("density matrices must have matching shapes")
    p = 1.0 - np.trace(rho_i @ rho_f).real
    return float(np.clip(p, 0.0, 1.0))


def _survival_grid(h0, v_amp, f_grid, t_b_us, substeps):
    """|U_ii(f)|^2 for all eigenstate i over a frequency chunk.

    Works in the eigenbasis of h0 so the diagonal of U is directly the
    survival amplitude of each initial eigenstate.
    """
    w, vecs = eigensystem(h0)
    h0_d = np.diag(w).astype(complex)
    v_d = vecs.conj().T @ v_amp @ vecs
    nf = len(f_grid)
    d = h0.shape[0]
    u = np.broadcast_to(np.eye(d, dtype=complex), (nf, d, d)).copy()
    # common conservative step over the chunk keeps the batch rectangular
    dt = 1.0 / (substeps * float(np.max(f_grid)))
    u = _magnus_steps(h0_d[None, :, :], v_d[None, :, :],
                      np.asarray(f_grid, dtype=float), 0.0, t_b_us, dt, u)
    diag = u[:, np.arange(d), np.arange(d)]
    return np.abs(diag) ** 2


def transition_spectrum(h0, v_amp, f_grid_mhz, t_b_us, populations,
                        substeps=40):
    """Population-weighted pump probability P(f) of one member.

    P(f) = sum_i pop_i * (1 - |<i|U(f)|i>|^2) over the eigenstates of h0,
    computed with the batched Magnus propagator.  The frequency grid is
    chunked across NVDEER_THREADS workers (the eigendecomposition releases
    the GIL, so threads help when more than one core is available).
    """
    f = np.asarray(f_grid_mhz, dtype=float)
    if f.ndim != 1 or len(f) == 0:
        raise ValueError("f_grid_mhz must be a non-empty 1-D array")
    if np.any(f <= 0):
        raise ValueError("drive frequencies must be positive")
    pop = np.asarray(populations, dtype=float)
    d = h0.shape[0]
    if pop.shape != (d,):
        raise ValueError(f"populations must have length {d}")
    if np.any(pop < 0) or not np.isclose(pop.sum(), 1.0, atol=1e-6):
        raise ValueError("populations must be non-negative and sum to 1")
    if t_b_us < 0:
        raise ValueError("t_b_us must be >= 0")

    nw = min(num_threads(), len(f))
    if nw == 1:
        surv = _survival_grid(h0, v_amp, f, t_b_us, substeps)
    else:
        chunks = np.array_split(np.arange(len(f)), nw)
        with ThreadPoolExecutor(max_workers=nw) as ex:
            parts = list(ex.map(
                lambda idx: _survival_grid(h0, v_amp, f[idx], t_b_us, substeps),
                chunks))
        surv = np.vstack(parts)
    p = (pop[None, :] * (1.0 - surv)).sum(axis=1)
    return np.clip(p, 0.0, 1.0)


def _member_populations(system, field, populations):
    """Resolve the initial eigenstate populations of one member."""
    d = {"P1": 6, "NV": 3, "X": 2}[system.species]
    if populations is not None:
        pop = np.asarray(populations, dtype=float)
        if pop.shape != (d,):
            raise ValueError(f"populations for {system.species} must have "
                             f"length {d}")
        return pop
    if system.species != "NV":
        return np.full(d, 1.0 / d)
    # NV ground populations from the optical-pumping steady state, with
    # spin mixing evaluated in this member's frame
    b0, _ = apply_orientation(system.orientation, field)
    rates = photophysics.RateModelParams.for_field(b0)
    n7, _ = photophysics.steady_state_populations(
        rates, photophysics.PulseTrain())
    return photophysics.ground_populations(n7)


def ensemble_transfer(members, field, f_grid_mhz, t_b_us, populations=None,
                      substeps=40):
    """Weighted pump probability P_B(f) of an ensemble of one species.

    Sums weight * transition_spectrum over the members.  populations may
    be None (uniform for P1/X, optical-pumping steady state for NV) or a
    vector applied to every member.
    """
    members = list(members)
    if not members:
        raise ValueError("ensemble must contain at least one member")
    species = {m.species for m in members}
    if len(species) > 1:
        raise ValueError("ensemble members must share one species")
    total = np.zeros(len(np.atleast_1d(f_grid_mhz)))
    for m in members:
        h0 = static_hamiltonian(m, field)
        v_amp = drive_amplitude_matrix(m, field)
        pop = _member_populations(m, field, populations)
        total = total + m.weight * transition_spectrum(
            h0, v_amp, f_grid_mhz, t_b_us, pop, substeps=substeps)
    return total


def simulate_rabi(system, field, t_grid_us, initial_level=None,
                  substeps=40):
    """Driven nutation P(t) of one member at the field's carrier.

    Starts from a single eigenstate of the static Hamiltonian (default:
    the lower level of the drive-allowed transition closest to the
    carrier) and records the leave probability at each requested time.

    Returns a SpectrumTrace (x = t_us, y = P).
    """
    t = np.asarray(t_grid_us, dtype=float)
    if t.ndim != 1 or len(t) == 0:
        raise ValueError("t_grid_us must be a non-empty 1-D array")
    if np.any(np.diff(t) < 0) or t[0] < 0:
        raise ValueError("t_grid_us must be sorted and non-negative")
    f_b = field.drive_freq_mhz
    if f_b <= 0:
        raise ValueError("field.drive_freq_mhz must be positive")
    h0 = static_hamiltonian(system, field)
    if initial_level is None:
        trans = allowed_transitions(system, field)
        if not trans:
            raise ValueError("no drive-allowed transition for this member")
        _, _, lo, _ = min(trans, key=lambda r: abs(r[0] - f_b))
        initial_level = lo
    d = h0.shape[0]
    if not 1 <= initial_level <= d:
        raise ValueError(f"initial_level must be in 1..{d}")

    w, vecs = eigensystem(h0)
    h0_d = np.diag(w).astype(complex)
    v_amp = vecs.conj().T @ drive_amplitude_matrix(system, field) @ vecs
    idx = initial_level - 1

    u = np.eye(d, dtype=complex)[None, :, :].copy()
    dt = 1.0 / (substeps * f_b)
    freqs = np.array([f_b])
    p = np.empty_like(t)
    t_prev = 0.0
    for k, tk in enumerate(t):
        if tk > t_prev:
            u = _magnus_steps(h0_d[None], v_amp[None], freqs,
                              t_prev, tk - t_prev, dt, u)
            t_prev = tk
        p[k] = 1.0 - abs(u[0, idx, idx]) ** 2
    return SpectrumTrace(t, np.clip(p, 0.0, 1.0),
                         x_label="t (us)", y_label="P",
                         meta={"f_b_mhz": f_b, "initial_level": initial_level,
                               "species": system.species})


def compute_sigma(h0, level_a, level_b, quant_axis=(0.0, 0.0, 1.0),
                  spin_ops=None):
    """Half the projection difference |<a|Sq|a> - <b|Sq|b>| / 2.

    Sq is the electron spin component along quant_axis.  This is the
    effective flip magnitude sigma of a driven transition a <-> b, the
    factor entering the dipolar decay prefactor (1/2 for a free electron,
    smaller for mixed levels).  Levels are 1-based in ascending energy.

    spin_ops defaults by dimension: 2 -> S=1/2, 3 -> S=1, 6 -> the P1
    electron operators embedded over the nuclear identity.
    """
    h0 = np.asarray(h0, dtype=complex)
    d = h0.shape[0]
    if spin_ops is None:
        if d == 2:
            spin_ops = spin_operators(0.5)
        elif d == 3:
            spin_ops = spin_operators(1.0)
        elif d == 6:
            spin_ops = electron_spin_operators("P1")
        else:
            raise ValueError("pass spin_ops explicitly for this dimension")
    if spin_ops.dim != d:
        raise ValueError("spin_ops dimension does not match h0")
    for lv in (level_a, level_b):
        if not 1 <= lv <= d:
            raise ValueError(f"level {lv} out of range 1..{d}")
    if level_a == level_b:
        raise ValueError("levels must differ")
    w, v = eigensystem(h0)
    sq = spin_ops.projection(quant_axis)
    ma = (v[:, level_a - 1].conj() @ sq @ v[:, level_a - 1]).real
    mb = (v[:, level_b - 1].conj() @ sq @ v[:, level_b - 1]).real
    return abs(ma - mb) / 2.0
