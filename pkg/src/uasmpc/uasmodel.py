"""Reduced-order coupled motion/energy model and its constraint sets.

States (hybrid-electric):  x = [xi, xi_dot, eta, eta_dot, SOC, P_b, m_f, P_e]
Inputs (hybrid-electric):  u = [xi_ddot, eta_ddot, P_b_dot, P_e_dot]

The electric variant drops ``m_f``, ``P_e`` and ``P_e_dot``.  Units are SI
throughout (W, J, s, m, kg, rad).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .zonoset import (
    ConstrainedZonotope,
    SetError,
    bounding_box,
    cartesian,
    intersect_halfspace,
    interval_set,
)

HYBRID = "hybrid_electric"
ELECTRIC = "electric"

STATE_LABELS = {
    HYBRID: ("xi", "xidot", "eta", "etadot", "soc", "pb", "mf", "pe"),
    ELECTRIC: ("xi", "xidot", "eta", "etadot", "soc", "pb"),
}
INPUT_LABELS = {
    HYBRID: ("xiddot", "etaddot", "pbdot", "pedot"),
    ELECTRIC: ("xiddot", "etaddot", "pbdot"),
}


@dataclass(frozen=True)
class VehicleParams:
    v_min: float
    v_max: float
    omega_lim: float  # rad/s
    P_min: float
    P_max: float
    Pb_min: float
    Pb_max: float
    Pb_rate: float
    C_b: float  # J
    SOC_min: float = 0.0
    SOC_max: float = 1.0
    Pe_min: float = 0.0
    Pe_max: float = 0.0
    Pe_rate: float = 0.0
    SFC: float = 0.0  # kg/J
    mf_max: float = 0.0
    variant: str = HYBRID
    forward_progress: bool = False

    def __post_init__(self):
        if self.variant not in (HYBRID, ELECTRIC):
            raise ValueError(f"unknown variant {self.variant!r}")
        if not self.v_max > self.v_min > 0:
            raise ValueError("need v_max > v_min > 0")
        if not self.P_max > self.P_min:
            raise ValueError("need P_max > P_min")
        if not self.C_b > 0:
            raise ValueError("battery capacity must be positive")
        if self.Pb_max < self.Pb_min or self.Pe_max < self.Pe_min:
            raise ValueError("power box is empty")
        if self.SOC_max < self.SOC_min:
            raise ValueError("SOC box is empty")

    @property
    def hybrid(self) -> bool:
        return self.variant == HYBRID

    @property
    def state_labels(self):
        return STATE_LABELS[self.variant]

    @property
    def input_labels(self):
        return INPUT_LABELS[self.variant]


@dataclass(frozen=True)
class StateConstraintParams:
    c_z: float
    a_z: float
    b_z: float
    g_b: float
    c_b: float
    g_e: float
    c_e: float
    c_1: float


def state_constraint_params(p: VehicleParams) -> StateConstraintParams:
    c_z = (p.P_max - p.P_min) / 2
    a_z = (p.v_max + p.v_min) / (p.v_max - p.v_min) * c_z
    b_z = a_z / (a_z + c_z) * p.v_max
    g_b = (p.Pb_max - p.Pb_min) / 2
    c_b = (p.Pb_max + p.Pb_min) / 2
    if p.hybrid:
        g_e = (p.Pe_max - p.Pe_min) / 2
        c_e = (p.Pe_max + p.Pe_min) / 2
    else:
        g_e = c_e = 0.0
    c_1 = 2 * a_z - (a_z - c_z) + p.P_min
    return StateConstraintParams(c_z, a_z, b_z, g_b, c_b, g_e, c_e, c_1)


@dataclass(frozen=True)
class ContinuousModel:
    A: np.ndarray
    B: np.ndarray
    state_labels: tuple
    input_labels: tuple


def continuous_dynamics(p: VehicleParams) -> ContinuousModel:
    """Double integrators for position plus first-order energy states."""
    n = 8 if p.hybrid else 6
    m = 4 if p.hybrid else 3
    A = np.zeros((n, n))
    B = np.zeros((n, m))
    A[0, 1] = 1.0
    A[2, 3] = 1.0
    B[1, 0] = 1.0
    B[3, 1] = 1.0
    A[4, 5] = -1.0 / p.C_b
    B[5, 2] = 1.0
    if p.hybrid:
        A[6, 7] = -p.SFC
        B[7, 3] = 1.0
    return ContinuousModel(A, B, p.state_labels, p.input_labels)


def discretize(m: ContinuousModel, dt: float):
    """Exact zero-order hold; the series terminates because ``A`` is nilpotent."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = m.A.shape[0]
    Ad = np.eye(n)
    Phi = np.eye(n) * dt  # integral of exp(A s) over [0, dt]
    term = np.eye(n)
    for k in range(1, n + 1):
        term = term @ m.A * dt / k
        if not np.any(term):
            break
        Ad = Ad + term
        Phi = Phi + term * dt / (k + 1)
    return Ad, Phi @ m.B


def power_velocity(p: VehicleParams, v: float) -> float:
    """Linear quasi-steady power needed for speed ``v``."""
    if not p.v_min - 1e-12 <= v <= p.v_max + 1e-12:
        raise ValueError(f"speed {v} outside [{p.v_min}, {p.v_max}]")
    return (p.P_max - p.P_min) / (p.v_max - p.v_min) * (v - p.v_min) + p.P_min


def speed_limit(p: VehicleParams, P: float) -> float:
    """Diamond-norm speed limit implied by total power ``P`` (inverse of the linear map)."""
    return p.v_min + (P - p.P_min) * (p.v_max - p.v_min) / (p.P_max - p.P_min)


def build_input_set(p: VehicleParams) -> ConstrainedZonotope:
    """Rotated box on accelerations, boxes on the power rates."""
    r = p.v_min * p.omega_lim / 2
    acc = ConstrainedZonotope(r * np.array([[1.0, 1.0], [-1.0, 1.0]]), np.zeros(2), np.zeros((0, 2)), np.zeros(0))
    parts = [acc, interval_set([-p.Pb_rate], [p.Pb_rate])]
    if p.hybrid:
        parts.append(interval_set([-p.Pe_rate], [p.Pe_rate]))
    return cartesian(*parts)


def build_state_set(p: VehicleParams) -> ConstrainedZonotope:
    """Coupled velocity/power set over ``(xi_dot, eta_dot, P_b[, P_e])``.

    Seven factors and three equality constraints for the hybrid variant (six
    and three for the electric one); the forward-progress halfspace adds one
    of each.
    """
    s = state_constraint_params(p)
    if p.P_min > p.Pb_max + (p.Pe_max if p.hybrid else 0.0):
        raise SetError("infeasible state set")
    h = s.b_z / 2
    vel = np.array([[h, -h, h, -h], [-h, h, h, -h]])
    if p.hybrid:
        Gc = np.zeros((4, 7))
        Gc[:2, 2:6] = vel
        Gc[2, 0] = s.g_b
        Gc[3, 1] = s.g_e
        c = np.array([0.0, 0.0, s.c_b, s.c_e])
        Ac = np.array(
            [
                [s.g_b, s.g_e, s.a_z, s.a_z, 0, 0, 0],
                [0, 0, s.a_z, s.a_z, 0, 0, s.c_z],
                [0, 0, 0, 0, s.a_z, s.a_z, s.c_z],
            ]
        )
        b = np.array([s.c_1 - s.c_b - s.c_e, s.a_z, s.a_z])
    else:
        Gc = np.zeros((3, 6))
        Gc[:2, 1:5] = vel
        Gc[2, 0] = s.g_b
        c = np.array([0.0, 0.0, s.c_b])
        Ac = np.array(
            [
                [s.g_b, s.a_z, s.a_z, 0, 0, 0],
                [0, s.a_z, s.a_z, 0, 0, s.c_z],
                [0, 0, 0, s.a_z, s.a_z, s.c_z],
            ]
        )
        b = np.array([s.c_1 - s.c_b, s.a_z, s.a_z])
    Z = ConstrainedZonotope(Gc, c, Ac, b)
    if p.forward_progress:
        a = np.zeros(Z.n)
        a[0] = -1.0
        Z = intersect_halfspace(Z, a, -p.v_min)
    return Z


def state_set_hrep(p: VehicleParams):
    """H-rep ``(H, f)`` of the same coupled set (minimum power, speed/power, boxes)."""
    k = (p.v_max - p.v_min) / (p.P_max - p.P_min)
    rhs = p.v_min - k * p.P_min
    rows, f = [], []
    nP = 2 if p.hybrid else 1
    for sx in (1, -1):
        for sy in (1, -1):
            rows.append([sx, sy] + [-k] * nP)
            f.append(rhs)
    rows.append([0, 0] + [-1.0] * nP)
    f.append(-p.P_min)
    boxes = [(p.Pb_min, p.Pb_max)] + ([(p.Pe_min, p.Pe_max)] if p.hybrid else [])
    for j, (lo, hi) in enumerate(boxes):
        e = [0.0] * (2 + nP)
        e[2 + j] = 1.0
        rows.append(list(e))
        f.append(hi)
        rows.append([-v for v in e])
        f.append(-lo)
    if p.forward_progress:
        rows.append([-1.0, 0.0] + [0.0] * nP)
        f.append(-p.v_min)
    return np.array(rows, dtype=float), np.array(f, dtype=float)


def state_set_hrep_core(p: VehicleParams):
    """H-rep without the forward-progress row (the 9-row system for the hybrid variant)."""
    H, f = state_set_hrep(p)
    if p.forward_progress:
        H, f = H[:-1], f[:-1]
    return H, f


@dataclass(frozen=True)
class Wayset:
    """Terminal intervals on position and SOC; ``None`` means unconstrained."""

    xi: tuple | None = None
    eta: tuple | None = None
    soc: tuple | None = None


def build_terminal_set(X: ConstrainedZonotope, wayset: Wayset | None, full_box) -> ConstrainedZonotope:
    """Extend ``X`` with interval factors on ``(xi, eta, SOC)``.

    ``full_box`` supplies ``[(lo, hi)] * 3`` used where the wayset leaves a
    coordinate free.
    """
    wayset = wayset or Wayset()
    ivs = []
    for given, default in zip((wayset.xi, wayset.eta, wayset.soc), full_box):
        lo, hi = given if given is not None else default
        if hi < lo:
            raise SetError("empty wayset interval")
        ivs.append((lo, hi))
    lo = [iv[0] for iv in ivs]
    hi = [iv[1] for iv in ivs]
    return cartesian(X, interval_set(lo, hi))


# state indices covered by the coupled set, and by the terminal extension
def coupled_indices(p: VehicleParams):
    return [1, 3, 5, 7] if p.hybrid else [1, 3, 5]


def terminal_indices(p: VehicleParams):
    return coupled_indices(p) + [0, 2, 4]


@dataclass(frozen=True)
class DiscreteModel:
    params: VehicleParams
    Ad: np.ndarray
    Bd: np.ndarray
    dt: float
    X: ConstrainedZonotope
    U: ConstrainedZonotope
    XN: ConstrainedZonotope
    H: np.ndarray
    box: np.ndarray  # (n, 2) per-state bounds
    input_box: np.ndarray = field(default=None)

    @property
    def n(self) -> int:
        return self.Ad.shape[0]

    @property
    def m(self) -> int:
        return self.Bd.shape[1]

    def step(self, x, u):
        return self.Ad @ x + self.Bd @ u


def build_model(p: VehicleParams, dt: float, position_box, wayset: Wayset | None = None, terminal_is_X: bool = False):
    """Discrete model plus its state, input and terminal sets.

    ``position_box`` is ``[(xi_lo, xi_hi), (eta_lo, eta_hi)]`` (usually the
    map's bounding box).  With ``terminal_is_X`` the terminal set is ``X``
    itself; otherwise it is ``X`` extended by the wayset intervals.
    """
    cm = continuous_dynamics(p)
    Ad, Bd = discretize(cm, dt)
    X = build_state_set(p)
    U = build_input_set(p)
    xbox = bounding_box(X)
    n = cm.A.shape[0]
    box = np.empty((n, 2))
    box[0] = position_box[0]
    box[2] = position_box[1]
    box[1] = xbox[0]
    box[3] = xbox[1]
    box[4] = (p.SOC_min, p.SOC_max)
    box[5] = (p.Pb_min, p.Pb_max)
    if p.hybrid:
        box[6] = (0.0, p.mf_max)
        box[7] = (p.Pe_min, p.Pe_max)
    if terminal_is_X:
        XN = X
    else:
        XN = build_terminal_set(X, wayset, [tuple(box[0]), tuple(box[2]), tuple(box[4])])
    H = np.zeros((3 if p.hybrid else 2, n))
    H[0, 0] = 1.0
    H[1, 2] = 1.0
    if p.hybrid:
        H[2, 7] = 1.0
    return DiscreteModel(p, Ad, Bd, dt, X, U, XN, H, box, bounding_box(U))


def flat_outputs(xidot, etadot, xiddot, etaddot, v_floor: float):
    """Speed, heading and turn rate from the flat outputs.

    The turn-rate denominator is clamped at ``v_floor**2``; the returned flag
    marks samples where the clamp was active.
    """
    v = float(np.hypot(xidot, etadot))
    theta = float(np.arctan2(etadot, xidot))
    den = xidot**2 + etadot**2
    clamped = den < v_floor**2
    omega = float((xidot * etaddot - etadot * xiddot) / max(den, v_floor**2))
    return v, theta, omega, clamped
