"""Discrete LTI systems with known and unknown inputs.

    x_{t+1} = A x_t + B u_t + E d_t
    y_t     = C x_t
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .linalg import DEFAULT_TOL, Tolerance, as_mat, numerical_rank, spectral_radius
from .trajectory import Trajectory


@dataclass(frozen=True)
class LtiSystem:
    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = as_mat(self.A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B, E = (np.zeros((n, 0)) if M is None or np.size(M) == 0
                else as_mat(np.reshape(M, (n, -1))) for M in (self.B, self.E))
        C = as_mat(self.C)
        if C.shape[1] != n:
            raise ValueError(f"C must have {n} columns, got {C.shape}")
        for name, M in (("A", A), ("B", B), ("E", E), ("C", C)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def m_d(self) -> int:
        return self.E.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def to_dict(self) -> dict:
        return {"n": self.n, "m": self.m, "p": self.p, "m_d": self.m_d,
                **{k: getattr(self, k).tolist() for k in "ABEC"}}

    @classmethod
    def from_dict(cls, obj: dict) -> "LtiSystem":
        """Inverse of :meth:`to_dict`; the dimension keys may be omitted."""
        n = obj.get("n", len(obj["A"]))

        def width(key, dim):
            if dim in obj:
                return obj[dim]
            rows = obj.get(key) or []
            return len(rows[0]) if rows else 0

        p = obj.get("p", len(obj["C"]))
        shapes = {"A": (n, n), "B": (n, width("B", "m")), "E": (n, width("E", "m_d")), "C": (p, n)}
        return cls(**{k: np.array(obj.get(k) or [], dtype=float).reshape(s)
                      for k, s in shapes.items()})

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "LtiSystem":
        return cls.from_dict(json.loads(Path(path).read_text()))


def simulate(sys: LtiSystem, x0, u=None, d=None, T: Optional[int] = None,
             meta: Optional[dict] = None, y_noise=None) -> Trajectory:
    """Run the recurrence; the returned trajectory carries ``d``.

    ``T`` is inferred from ``u`` or ``d`` unless given. Pass ``None`` for an
    input channel of width zero. ``y_noise`` (T x p) is added to the outputs
    only; the state is unaffected.
    """
    lengths = [len(a) for a in (u, d) if a is not None and np.size(a)]
    if T is None:
        if not lengths:
            raise ValueError("cannot infer the length; pass T")
        T = lengths[0]
    if any(k != T for k in lengths):
        raise ValueError(f"input lengths {lengths} do not match T={T}")
    u = np.zeros((T, 0)) if sys.m == 0 else np.asarray(u, dtype=float).reshape(T, sys.m)
    d = np.zeros((T, 0)) if sys.m_d == 0 else np.asarray(d, dtype=float).reshape(T, sys.m_d)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (sys.n,):
        raise ValueError(f"x0 must have {sys.n} entries")
    x = np.empty((T, sys.n))
    x[0] = x0
    for t in range(T - 1):
        x[t + 1] = sys.A @ x[t] + sys.B @ u[t] + sys.E @ d[t]
    y = x @ sys.C.T
    if y_noise is not None:
        y_noise = np.asarray(y_noise, dtype=float)
        if y_noise.shape != y.shape:
            raise ValueError(f"y_noise must have shape {y.shape}, got {y_noise.shape}")
        y = y + y_noise
    return Trajectory(u=u, y=y, x=x, d=d, meta=dict(meta or {}))


EXCITATION_KINDS = ("uniform-random", "gaussian", "prbs", "multisine", "constant-plus-random")


@dataclass(frozen=True)
class ExcitationSpec:
    kind: str
    dims: int
    length: int
    amplitude: float = 1.0
    seed: int = 0
    offset: float = 0.0  # constant part for constant-plus-random

    def __post_init__(self):
        if self.kind not in EXCITATION_KINDS:
            raise ValueError(f"unknown excitation kind {self.kind!r}")
        if self.length < 1:
            raise ValueError("length must be >= 1")
        if self.dims < 0:
            raise ValueError("dims must be >= 0")
        if self.kind != "constant-plus-random" and not self.amplitude > 0:
            raise ValueError("amplitude must be positive")


def generate_excitation(spec: ExcitationSpec) -> np.ndarray:
    """Deterministic ``(length, dims)`` excitation signal."""
    rng = np.random.default_rng(spec.seed)
    shape = (spec.length, spec.dims)
    a = spec.amplitude
    if spec.kind == "uniform-random":
        return rng.uniform(-a, a, shape)
    if spec.kind == "gaussian":
        return a * rng.standard_normal(shape)
    if spec.kind == "prbs":
        return np.where(rng.integers(0, 2, shape) == 1, a, -a).astype(float)
    if spec.kind == "multisine":
        k = math.ceil(spec.length / 2)
        t = np.arange(spec.length)[:, None]
        out = np.zeros(shape)
        for j in range(spec.dims):
            # sqrt(prime) frequencies are pairwise incommensurate
            freqs = np.pi * np.sqrt(_primes(k + j * k)[j * k:]) % np.pi
            phases = rng.uniform(0, 2 * np.pi, k)
            out[:, j] = (a / k) * np.sin(freqs[None, :] * t + phases).sum(axis=1)
        return out
    # constant-plus-random
    return spec.offset + rng.uniform(-1, 1, shape) * a


def _primes(count: int) -> np.ndarray:
    out: list[int] = []
    c = 2
    while len(out) < count:
        if all(c % q for q in out if q * q <= c):
            out.append(c)
        c += 1
    return np.array(out, dtype=float)


def controllability_matrix(A, B) -> np.ndarray:
    n = A.shape[0]
    blocks, M = [], B
    for _ in range(n):
        blocks.append(M)
        M = A @ M
    return np.hstack(blocks) if B.shape[1] else np.zeros((n, 0))


def observability_matrix(A, C) -> np.ndarray:
    return controllability_matrix(A.T, C.T).T


def check_minimality(sys: LtiSystem, tol: Tolerance = DEFAULT_TOL) -> tuple[bool, bool]:
    """Kalman rank tests: controllability of ``(A, [B E])``, observability of ``(A, C)``."""
    BE = np.hstack([sys.B, sys.E])
    ctrb = numerical_rank(controllability_matrix(sys.A, BE), tol) == sys.n
    obsv = numerical_rank(observability_matrix(sys.A, sys.C), tol) == sys.n
    return ctrb, obsv


def build_theta(sys: LtiSystem) -> tuple[np.ndarray, np.ndarray]:
    """Two-step response map and the row permutation used to check data blocks.

    ``Theta @ [u_t; u_{t+1}; d_t; d_{t+1}; x_t]`` gives
    ``[u_t; u_{t+1}; y_t; y_{t+1}; x_t; x_{t+1}]``, and ``P_R`` reorders
    ``[v_t; x_t; v_{t+1}; x_{t+1}]`` into that layout, so the data satisfy
    ``stack4 == P_R.T @ Theta @ [U; D; X_p]``.
    """
    n, m, p, md = sys.n, sys.m, sys.p, sys.m_d
    A, B, E, C = sys.A, sys.B, sys.E, sys.C

    def lower(M):
        r, c = M.shape
        out = np.zeros((2 * r, 2 * c))
        out[r:, :c] = M
        return out

    I_n = np.eye(n)
    T_uy, T_dy = lower(C @ B), lower(C @ E)
    T_ux, T_dx = lower(B), lower(E)
    O_y = np.vstack([C, C @ A])
    O_x = np.vstack([I_n, A])
    Theta = np.block([
        [np.eye(2 * m), np.zeros((2 * m, 2 * md)), np.zeros((2 * m, n))],
        [T_uy, T_dy, O_y],
        [T_ux, T_dx, O_x],
    ])

    # source layout: [u_t, y_t, x_t, u_{t+1}, y_{t+1}, x_{t+1}]
    q = m + p
    src = {
        "u0": range(0, m), "y0": range(m, q), "x0": range(q, q + n),
        "u1": range(q + n, q + n + m), "y1": range(q + n + m, 2 * q + n),
        "x1": range(2 * q + n, 2 * q + 2 * n),
    }
    order = [i for k in ("u0", "u1", "y0", "y1", "x0", "x1") for i in src[k]]
    N = 2 * q + 2 * n
    P_R = np.zeros((N, N))
    P_R[np.arange(N), order] = 1.0
    return Theta, P_R


def random_system(rng: np.random.Generator, n: int, m: int, p: int, m_d: int,
                  rho: float = 0.95, C_identity: bool = False,
                  tol: Tolerance = DEFAULT_TOL, max_tries: int = 1000) -> LtiSystem:
    """Draw a random minimal system with spectral radius of ``A`` equal to ``rho``."""
    if m + m_d == 0:
        raise ValueError("a system without inputs cannot be controllable")
    if C_identity and p != n:
        raise ValueError("C = I requires p == n")
    for _ in range(max_tries):
        A = rng.standard_normal((n, n))
        r = spectral_radius(A)
        if r < 1e-8:
            continue
        A *= rho / r
        C = np.eye(n) if C_identity else rng.standard_normal((p, n))
        sys = LtiSystem(A, rng.standard_normal((n, m)), rng.standard_normal((n, m_d)), C)
        if all(check_minimality(sys, tol)):
            return sys
    raise RuntimeError("could not draw a minimal system")
