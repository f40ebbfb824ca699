"""Experiment data, Hankel matrices and the one-step past/future block split."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .linalg import DEFAULT_TOL, Tolerance, numerical_rank


def _seq(a, width: Optional[int] = None) -> np.ndarray:
    """Coerce a signal to a (T, q) float array. 1-D input is a scalar signal."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None] if width in (None, 1) else a.reshape(-1, width)
    if a.ndim != 2:
        raise ValueError(f"signal must be 1-D or 2-D, got shape {a.shape}")
    if width is not None and a.shape[1] != width:
        raise ValueError(f"expected {width}-vectors, got width {a.shape[1]}")
    if not np.all(np.isfinite(a)):
        raise ValueError("signal has non-finite entries")
    return a


@dataclass(frozen=True)
class Trajectory:
    """One experiment, each signal stored as a ``(T, dim)`` array.

    ``d`` is only ever present in offline (historical) data. ``x`` may be
    absent for online data, where the estimator needs just ``u`` and ``y``.
    """

    u: np.ndarray
    y: np.ndarray
    x: Optional[np.ndarray] = None
    d: Optional[np.ndarray] = None
    n: Optional[int] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        y = _seq(self.y)
        T = y.shape[0]
        u = np.zeros((T, 0)) if self.u is None else _seq(self.u)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "u", u)
        lengths = {"u": u.shape[0], "y": T}
        if self.x is not None:
            x = _seq(self.x)
            object.__setattr__(self, "x", x)
            lengths["x"] = x.shape[0]
            if self.n is not None and self.n != x.shape[1]:
                raise ValueError(f"n={self.n} but x has width {x.shape[1]}")
            object.__setattr__(self, "n", x.shape[1])
        if self.d is not None:
            d = _seq(self.d)
            object.__setattr__(self, "d", d)
            lengths["d"] = d.shape[0]
        if len(set(lengths.values())) != 1:
            raise ValueError(f"signal lengths differ: {lengths}")
        if T < 2:
            raise ValueError("a trajectory needs at least 2 samples")
        for a in (self.u, self.y, self.x, self.d):
            if a is not None:
                a.setflags(write=False)

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def p(self) -> int:
        return self.y.shape[1]

    @property
    def m_d(self) -> Optional[int]:
        return None if self.d is None else self.d.shape[1]

    @property
    def v(self) -> np.ndarray:
        """Measured signal ``v_t = [u_t; y_t]``."""
        return np.hstack([self.u, self.y])

    def online(self) -> "Trajectory":
        """Copy without the unknown input, as an online consumer would see it."""
        return Trajectory(u=self.u, y=self.y, x=self.x, n=self.n, meta=dict(self.meta))

    def dims(self) -> dict:
        return {"n": self.n, "m": self.m, "p": self.p, "m_d": self.m_d, "T": self.T}


def hankel(signal, L: int) -> np.ndarray:
    """Block Hankel matrix of depth ``L``; block ``(r, c)`` is ``signal[r + c]``."""
    w = _seq(signal)
    T, q = w.shape
    if L < 1:
        raise ValueError("depth L must be at least 1")
    if L > T:
        raise ValueError(f"depth L={L} exceeds signal length T={T}")
    cols = T - L + 1
    H = np.empty((q * L, cols))
    for r in range(L):
        H[r * q:(r + 1) * q, :] = w[r:r + cols].T
    return H


def is_persistently_exciting(signal, order: int, tol: Tolerance = DEFAULT_TOL) -> bool:
    """True iff the depth-``order`` Hankel matrix has full row rank."""
    w = _seq(signal)
    if order > w.shape[0]:
        return False
    H = hankel(w, order)
    return numerical_rank(H, tol) == H.shape[0]


def check_assumption1(traj: Trajectory, tol: Tolerance = DEFAULT_TOL) -> Optional[bool]:
    """Persistency of excitation of ``[u; d]`` of order ``n + 2``.

    Returns ``None`` when the unknown input was not recorded, since the
    condition cannot be checked then.
    """
    if traj.d is None or traj.n is None:
        return None
    ud = np.hstack([traj.u, traj.d])
    return is_persistently_exciting(ud, traj.n + 2, tol)


def min_pe_length(n: int, m: int, m_d: int) -> int:
    """Shortest experiment for which excitation of order n+2 is possible."""
    return (m + m_d + 1) * (n + 2) - 1


def default_length(n: int, m: int, m_d: int) -> int:
    return (m + m_d + 1) * (n + 2) + n


@dataclass(frozen=True)
class HankelBlocks:
    """Past/future blocks with one block row each.

    Column ``j`` of ``(V_p, X_p, V_f, X_f)`` is ``(v_j, x_j, v_{j+1}, x_{j+1})``.
    ``U`` and ``D`` are depth-2 Hankels kept for the excitation diagnostics.
    """

    U: np.ndarray
    D: Optional[np.ndarray]
    V_p: np.ndarray
    X_p: np.ndarray
    V_f: np.ndarray
    X_f: np.ndarray
    n: int
    m: int
    p: int
    m_d: Optional[int]
    T: int
    assumption1: Optional[bool] = None

    @property
    def stack3(self) -> np.ndarray:
        return np.vstack([self.V_p, self.X_p, self.V_f])

    @property
    def stack4(self) -> np.ndarray:
        return np.vstack([self.V_p, self.X_p, self.V_f, self.X_f])


def build_blocks(traj: Trajectory, tol: Tolerance = DEFAULT_TOL) -> HankelBlocks:
    if traj.x is None:
        raise ValueError("historical data must include the state")
    if traj.T < 2:
        raise ValueError("need T >= 2")
    q = traj.m + traj.p
    n = traj.n
    V = hankel(traj.v, 2)
    X = hankel(traj.x, 2)
    return HankelBlocks(
        U=hankel(traj.u, 2),
        D=None if traj.d is None else hankel(traj.d, 2),
        V_p=V[:q], X_p=X[:n], V_f=V[q:], X_f=X[n:],
        n=n, m=traj.m, p=traj.p, m_d=traj.m_d, T=traj.T,
        assumption1=check_assumption1(traj, tol),
    )


# --- file formats -----------------------------------------------------------

def _header(n, m, p, m_d, has_x, has_d):
    cols = ["t"] + [f"u_{i}" for i in range(m)]
    if has_d:
        cols += [f"d_{i}" for i in range(m_d)]
    if has_x:
        cols += [f"x_{i}" for i in range(n)]
    return cols + [f"y_{i}" for i in range(p)]


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_trajectory(traj: Trajectory, path) -> Path:
    """Write ``path`` (CSV) plus a JSON sidecar holding dims and metadata.

    Floats are written with ``repr`` so the file round-trips bit-exactly.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    has_x, has_d = traj.x is not None, traj.d is not None
    blocks = [traj.u] + ([traj.d] if has_d else []) + ([traj.x] if has_x else []) + [traj.y]
    body = np.hstack(blocks)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_header(traj.n or 0, traj.m, traj.p, traj.m_d or 0, has_x, has_d))
        for t, row in enumerate(body):
            w.writerow([t] + [repr(float(v)) for v in row])
    side = {
        "dims": traj.dims(),
        "has_x": has_x,
        "has_d": has_d,
        "meta": traj.meta,
    }
    sidecar_path(path).write_text(json.dumps(side, indent=2, sort_keys=True))
    return path


def read_trajectory(path) -> Trajectory:
    """Read a trajectory CSV. Column groups are recovered from the header."""
    path = Path(path)
    side = {}
    if sidecar_path(path).exists():
        side = json.loads(sidecar_path(path).read_text())
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body], dtype=np.float64)
    if data.size == 0:
        data = data.reshape(0, len(header))
    groups: dict[str, list[int]] = {}
    for j, name in enumerate(header):
        if name == "t":
            continue
        prefix, _, idx = name.partition("_")
        if prefix not in ("u", "d", "x", "y") or not idx.isdigit():
            raise ValueError(f"{path}: unexpected column {name!r}")
        groups.setdefault(prefix, []).append(j)
    if "y" not in groups:
        raise ValueError(f"{path}: no output columns")
    take = lambda k: data[:, groups[k]] if k in groups else None  # noqa: E731
    u = take("u")
    if u is None:
        u = np.zeros((data.shape[0], 0))
    dims = side.get("dims", {})
    d = take("d")
    if d is None and side.get("has_d") and dims.get("m_d") == 0:
        d = np.zeros((data.shape[0], 0))
    return Trajectory(u=u, y=take("y"), x=take("x"), d=d,
                      n=dims.get("n"), meta=side.get("meta", {}))
