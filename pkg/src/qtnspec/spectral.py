"""Zero-temperature neutron-scattering response from transition energies and dipole tables."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

GAMMA_N = -1.913
R0_FM = 2.818
DEFAULT_FWHM = 0.05  # meV


@dataclass(frozen=True)
class FormFactorParams:
    """Exponential fits <j_l>(s) = s^l (A e^{-a s^2} + B e^{-b s^2} + C e^{-c s^2} + D) (l = 0, 2)."""
    j0: tuple
    j2: tuple
    g: float = 2.0
    e0: float = 0.0   # fit residual column, metadata only
    e2: float = 0.0


CR3 = FormFactorParams(
    j0=(-0.3094, 0.0274, 0.3680, 17.0355, 0.6559, 6.5236, 0.2856),
    j2=(1.6262, 15.0656, 2.0618, 6.2842, 0.5281, 2.3680, 0.0023),
    g=1.98, e0=0.0436, e2=0.0263,
)


def _radial(s2, c):
    A, a, B, b, C, cc, D = c
    return A * np.exp(-a * s2) + B * np.exp(-b * s2) + C * np.exp(-cc * s2) + D


def j0(q, params: FormFactorParams = CR3):
    s2 = (np.asarray(q, float) / (4 * np.pi)) ** 2
    return _radial(s2, params.j0)


def j2(q, params: FormFactorParams = CR3):
    s2 = (np.asarray(q, float) / (4 * np.pi)) ** 2
    return s2 * _radial(s2, params.j2)


def form_factor(q, params: FormFactorParams = CR3):
    """F(Q) = <j0> + (2 - g)/g <j2>, Q in 1/Angstrom."""
    q = np.asarray(q, float)
    if np.any(q < 0):
        raise ValueError("|Q| must be non-negative")
    return j0(q, params) + (2 - params.g) / params.g * j2(q, params)


def rotation_z(phi: float) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


@dataclass
class Geometry:
    positions: np.ndarray                 # (L, 3) Angstrom
    orientations: list = field(default_factory=lambda: [np.eye(3)])

    def __post_init__(self):
        self.positions = np.asarray(self.positions, float)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError("positions must be (L, 3)")
        rs = []
        for r in self.orientations:
            r = np.asarray(r, float)
            if np.abs(r.T @ r - np.eye(3)).max() > 1e-10 or np.linalg.det(r) < 0:
                raise ValueError("orientations must be proper rotations")
            rs.append(r)
        self.orientations = rs

    @property
    def L(self) -> int:
        return self.positions.shape[0]

    @classmethod
    def ring(cls, L: int = 8, radius: float = 2.95, second_rotation: float | None = np.pi / 8) -> "Geometry":
        """Regular L-gon in the x-y plane, optionally averaged with a copy rotated about z."""
        phi = 2 * np.pi * np.arange(L) / L
        pos = np.stack([radius * np.cos(phi), radius * np.sin(phi), np.zeros(L)], 1)
        ors = [np.eye(3)]
        if second_rotation is not None:
            ors.append(rotation_z(second_rotation))
        return cls(pos, ors)


@dataclass
class Transition:
    energy: float                          # meV above the ground state
    table: np.ndarray                      # O[alpha, beta, i, j], alpha/beta over x, y, z
    var_re: np.ndarray | None = None       # shot-noise variances of Re/Im of each element
    var_im: np.ndarray | None = None
    label: str = ""


@dataclass
class TransitionSet:
    transitions: list

    def __post_init__(self):
        es = [t.energy for t in self.transitions]
        if any(e < 0 for e in es):
            raise ValueError("transition energies must be non-negative")
        if es != sorted(es):
            raise ValueError("transitions must be ordered by energy")
        for t in self.transitions:
            t.table = np.asarray(t.table, complex)
            if t.table.ndim != 4 or t.table.shape[:2] != (3, 3):
                raise ValueError("dipole table must be (3, 3, L, L)")
            if np.isnan(t.table).any():
                raise ValueError("dipole table has missing elements")

    @property
    def energies(self) -> np.ndarray:
        return np.array([t.energy for t in self.transitions])


def gaussian(omega, center, fwhm: float = DEFAULT_FWHM):
    sigma = fwhm / (2 * np.sqrt(2 * np.log(2)))
    x = (np.asarray(omega, float) - center) / sigma
    return np.exp(-0.5 * x * x) / (sigma * np.sqrt(2 * np.pi))


def polarization(q: np.ndarray) -> np.ndarray:
    """delta_ab - Qhat_a Qhat_b; the isotropic 2/3 delta_ab at Q = 0."""
    q = np.asarray(q, float)
    n = np.linalg.norm(q)
    if n == 0:
        log.info("Q = 0: using the orientation-averaged polarization factor 2/3")
        return np.eye(3) * 2 / 3
    u = q / n
    return np.eye(3) - np.outer(u, u)


def _coefficients(geo: Geometry, q: np.ndarray, polarize: bool = True):
    """Orientation-averaged real coefficients of Re O and Im O in the line weight.

    Each orientation R places the molecule at R r_i; in the molecule frame the
    momentum is R^T Q, and the phase of element (i, j) is exp(-i Q.(r_i - r_j)).
    """
    L = geo.L
    cr = np.zeros((3, 3, L, L))
    ci = np.zeros((3, 3, L, L))
    for r in geo.orientations:
        qm = r.T @ q
        ph = geo.positions @ qm
        phase = ph[:, None] - ph[None, :]
        pol = polarization(qm) if polarize else np.ones((3, 3))
        # Re[e^{-i phi} O] = cos(phi) Re O + sin(phi) Im O
        cr += pol[:, :, None, None] * np.cos(phase)[None, None]
        ci += pol[:, :, None, None] * np.sin(phase)[None, None]
    n = len(geo.orientations)
    return cr / n, ci / n


def line_weights(ts: TransitionSet, geo: Geometry, q, polarize: bool = True):
    """Per-transition integrated weight sum_ab P_ab Re S_ab(Q) and its shot-noise variance."""
    q = np.asarray(q, float)
    cr, ci = _coefficients(geo, q, polarize)
    w = np.zeros(len(ts.transitions))
    v = np.zeros(len(ts.transitions))
    for k, t in enumerate(ts.transitions):
        if t.table.shape[2] != geo.L:
            raise ValueError("dipole table size does not match the geometry")
        w[k] = np.sum(cr * t.table.real + ci * t.table.imag)
        if t.var_re is not None:
            v[k] += np.sum(cr ** 2 * t.var_re)
        if t.var_im is not None:
            v[k] += np.sum(ci ** 2 * t.var_im)
    return w, v


def static_structure(ts: TransitionSet, geo: Geometry, q, alpha: int, beta: int) -> complex:
    """sum_p sum_ij exp(-i Q.r_ij) O^{ab}_{ij;p} for the identity orientation."""
    ph = geo.positions @ np.asarray(q, float)
    phase = np.exp(-1j * (ph[:, None] - ph[None, :]))
    return complex(sum(np.sum(phase * t.table[alpha, beta]) for t in ts.transitions))


def response(ts: TransitionSet, geo: Geometry, q, omega, fwhm: float = DEFAULT_FWHM) -> np.ndarray:
    """S_ab(Q, omega) for the identity orientation, shape (n_omega, 3, 3)."""
    ph = geo.positions @ np.asarray(q, float)
    phase = np.exp(-1j * (ph[:, None] - ph[None, :]))
    omega = np.asarray(omega, float)
    out = np.zeros((omega.size, 3, 3), complex)
    for t in ts.transitions:
        s = np.einsum("ij,abij->ab", phase, t.table)
        out += gaussian(omega, t.energy, fwhm)[:, None, None] * s[None]
    return out


@dataclass
class SpectrumGrid:
    q: np.ndarray          # (nQ, 3)
    omega: np.ndarray      # (nw,)
    intensity: np.ndarray  # (nQ, nw)
    variance: np.ndarray | None = None
    weights: np.ndarray | None = None   # (nQ, n_transitions) integrated line weights
    energies: np.ndarray | None = None

    @property
    def q_mag(self) -> np.ndarray:
        return np.linalg.norm(self.q, axis=1)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["Q", "Qx", "Qy", "Qz", "omega", "I", "I_stderr"])
        for a in range(self.q.shape[0]):
            for b in range(self.omega.size):
                se = np.sqrt(self.variance[a, b]) if self.variance is not None else 0.0
                w.writerow([f"{self.q_mag[a]:.10g}", *(f"{x:.10g}" for x in self.q[a]),
                            f"{self.omega[b]:.10g}", f"{self.intensity[a, b]:.12g}", f"{se:.6g}"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def lines_json(self) -> str:
        lines = []
        for a in range(self.q.shape[0]):
            for k, e in enumerate(self.energies):
                lines.append({"Q": self.q[a].tolist(), "omega": float(e), "weight": float(self.weights[a, k])})
        return json.dumps(lines)


def q_vectors(q_mag, direction=(1.0, 0.0, 0.0)) -> np.ndarray:
    u = np.asarray(direction, float)
    u = u / np.linalg.norm(u)
    return np.asarray(q_mag, float)[:, None] * u[None, :]


def intensity(ts: TransitionSet, geo: Geometry, q_grid, omega, params: FormFactorParams = CR3,
              fwhm: float = DEFAULT_FWHM, include_prefactor: bool = False,
              kf_over_ki: float = 1.0) -> SpectrumGrid:
    """I(Q, omega) = |g F(Q)/2|^2 sum_ab (delta_ab - Qhat_a Qhat_b) S_ab(Q, omega), orientation averaged.

    q_grid is an (nQ, 3) array of momentum vectors in 1/Angstrom.
    """
    q_grid = np.atleast_2d(np.asarray(q_grid, float))
    omega = np.asarray(omega, float)
    E = ts.energies
    kern = np.stack([gaussian(omega, e, fwhm) for e in E], 0) if len(E) else np.zeros((0, omega.size))
    nq = q_grid.shape[0]
    W = np.zeros((nq, len(E)))
    V = np.zeros((nq, len(E)))
    for a in range(nq):
        f = form_factor(np.linalg.norm(q_grid[a]), params)
        scale = (params.g * f / 2) ** 2
        if include_prefactor:
            scale *= (GAMMA_N * R0_FM) ** 2 * kf_over_ki
        w, v = line_weights(ts, geo, q_grid[a])
        W[a] = scale * w
        V[a] = scale ** 2 * v
    I = W @ kern
    var = V @ kern ** 2
    return SpectrumGrid(q_grid, omega, I, var, W, E)
