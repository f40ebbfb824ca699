"""Data-driven unknown-input observer: existence test, synthesis, estimation.

The observer is built from the past/future blocks of one historical
experiment. With ``S = [V_p; X_p; V_f]`` and ``Xi = pinv(S)`` split by
columns into ``(Xi_Vp, Xi_Xp, Xi_Vf)``:

    A_uio = X_f Xi_Xp
    D_uio = X_f Xi_Vf
    B_uio = X_f (Xi_Vp + Xi_Xp X_f Xi_Vf)

and the estimate is propagated by ``xhat_{t+1} = X_f Xi [v_t; xhat_t; v_{t+1}]``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .linalg import (
    DEFAULT_TOL,
    NumericalError,
    Tolerance,
    null_space_basis,
    numerical_rank,
    pinv,
    spectral_radius,
)
from .trajectory import HankelBlocks


class KernelInclusionMismatch(NumericalError):
    """The rank test and the kernel-product test disagree."""


@dataclass(frozen=True)
class XiPartition:
    Xi: np.ndarray
    q: int  # m + p
    n: int

    def __post_init__(self):
        if self.Xi.shape[1] != 2 * self.q + self.n:
            raise ValueError(f"Xi has {self.Xi.shape[1]} columns, expected {2 * self.q + self.n}")

    @property
    def Xi_Vp(self) -> np.ndarray:
        return self.Xi[:, :self.q]

    @property
    def Xi_Xp(self) -> np.ndarray:
        return self.Xi[:, self.q:self.q + self.n]

    @property
    def Xi_Vf(self) -> np.ndarray:
        return self.Xi[:, self.q + self.n:]


@dataclass(frozen=True)
class UioRealization:
    A_uio: np.ndarray
    B_uio: np.ndarray
    D_uio: np.ndarray
    gain: np.ndarray  # X_f Xi, acts on [v_t; xhat_t; v_{t+1}]
    n: int
    q: int
    digest: str = ""

    @property
    def gain_v(self) -> np.ndarray:
        return self.gain[:, :self.q]

    def to_dict(self) -> dict:
        return {
            "n": self.n, "q": self.q, "digest": self.digest,
            "A_uio": self.A_uio.tolist(), "B_uio": self.B_uio.tolist(),
            "D_uio": self.D_uio.tolist(), "gain": self.gain.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "UioRealization":
        n, q = obj["n"], obj["q"]

        def mat(key, cols):
            return np.array(obj[key], dtype=np.float64).reshape(n, cols)

        return cls(A_uio=mat("A_uio", n), B_uio=mat("B_uio", q), D_uio=mat("D_uio", q),
                   gain=mat("gain", 2 * q + n), n=n, q=q, digest=obj.get("digest", ""))


@dataclass(frozen=True)
class ExistenceReport:
    kernel_inclusion_holds: bool
    rank_stack3: int
    rank_stack4: int
    kernel_dim: int
    kernel_product_max: float
    spectral_radius_Auio: float
    schur: bool
    pe_checked: Optional[bool]
    exists: bool
    cond_stack3: float
    tolerances: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _digest(blocks: HankelBlocks) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(blocks.stack4).tobytes())
    h.update(repr((blocks.n, blocks.m, blocks.p, blocks.m_d, blocks.T)).encode())
    return h.hexdigest()


def compute_xi(blocks: HankelBlocks, tol: Tolerance = DEFAULT_TOL) -> XiPartition:
    return XiPartition(pinv(blocks.stack3, tol), q=blocks.m + blocks.p, n=blocks.n)


def _kernel_inclusion(blocks: HankelBlocks, tol: Tolerance):
    S3, S4 = blocks.stack3, blocks.stack4
    r3, r4 = numerical_rank(S3, tol), numerical_rank(S4, tol)
    N = null_space_basis(S3, tol)
    prod = float(np.max(np.abs(blocks.X_f @ N))) if N.size and blocks.X_f.size else 0.0
    # the product test uses the geometric mean of the stack4 cutoff and its
    # largest singular value: roundoff sits far below it, genuine leakage far above
    s_max = float(np.linalg.norm(S4, 2)) if S4.size else 0.0
    thr = np.sqrt(tol.cutoff(S4.shape, s_max) * max(s_max, tol.abs_floor))
    by_rank = r3 == r4
    by_product = prod <= thr
    if by_rank != by_product:
        raise KernelInclusionMismatch(
            f"rank test says {by_rank} (rank {r3} vs {r4}) but kernel product "
            f"{prod:.3e} vs threshold {thr:.3e} says {by_product}")
    return by_rank, r3, r4, N.shape[1], prod


def check_kernel_inclusion(blocks: HankelBlocks, tol: Tolerance = DEFAULT_TOL) -> bool:
    """Whether ``ker([V_p; X_p; V_f])`` lies inside ``ker(X_f)``.

    Checked two ways, by rank equality with and without ``X_f`` and by
    applying ``X_f`` to a kernel basis. A disagreement raises
    :class:`KernelInclusionMismatch`.
    """
    return _kernel_inclusion(blocks, tol)[0]


def realization_from_xi(blocks: HankelBlocks, xi: XiPartition, digest: str = "") -> UioRealization:
    Xf = blocks.X_f
    A = Xf @ xi.Xi_Xp
    D = Xf @ xi.Xi_Vf
    B = Xf @ (xi.Xi_Vp + xi.Xi_Xp @ D)
    return UioRealization(A_uio=A, B_uio=B, D_uio=D, gain=Xf @ xi.Xi,
                          n=blocks.n, q=xi.q, digest=digest)


def synthesize(blocks: HankelBlocks, tol: Tolerance = DEFAULT_TOL
               ) -> tuple[UioRealization, ExistenceReport]:
    """Build the observer and report whether it is a valid UIO.

    The realization is returned even when ``report.exists`` is False so the
    caller can inspect why.
    """
    xi = compute_xi(blocks, tol)
    real = realization_from_xi(blocks, xi, _digest(blocks))
    holds, r3, r4, kdim, prod = _kernel_inclusion(blocks, tol)
    rho = spectral_radius(real.A_uio)
    schur = rho < 1.0 - tol.schur_margin
    s = np.linalg.svd(blocks.stack3, compute_uv=False) if blocks.stack3.size else np.zeros(0)
    r = r3 if s.size else 0
    cond = float(s[0] / s[r - 1]) if r else float("inf")
    report = ExistenceReport(
        kernel_inclusion_holds=holds, rank_stack3=r3, rank_stack4=r4,
        kernel_dim=kdim, kernel_product_max=prod,
        spectral_radius_Auio=rho, schur=schur, pe_checked=blocks.assumption1,
        exists=holds and schur, cond_stack3=cond, tolerances=tol.as_dict(),
    )
    return real, report


def xi_independence_check(blocks: HankelBlocks, tol: Tolerance = DEFAULT_TOL,
                          seed: int = 0, rtol: float = 1e-8) -> Optional[bool]:
    """Perturb Xi inside the kernel of the 3-stack and compare the observer matrices.

    Returns ``None`` when the kernel inclusion fails, since the invariance
    is only claimed under that condition.
    """
    if not check_kernel_inclusion(blocks, tol):
        return None
    xi = compute_xi(blocks, tol)
    base = realization_from_xi(blocks, xi)
    N = null_space_basis(blocks.stack3, tol)
    rng = np.random.default_rng(seed)
    scale = max(1.0, float(np.max(np.abs(xi.Xi))) if xi.Xi.size else 1.0)
    delta = N @ rng.standard_normal((N.shape[1], xi.Xi.shape[1])) * scale
    pert = realization_from_xi(blocks, XiPartition(xi.Xi + delta, xi.q, xi.n))
    return all(_close(getattr(base, k), getattr(pert, k), rtol)
               for k in ("A_uio", "B_uio", "D_uio"))


def _close(a: np.ndarray, b: np.ndarray, rtol: float) -> bool:
    if a.size == 0:
        return True
    return float(np.max(np.abs(a - b))) <= rtol * max(1.0, float(np.max(np.abs(a))))


def estimate_step(r: UioRealization, xhat_t, v_t, v_next) -> np.ndarray:
    """One estimator step: ``gain @ [v_t; xhat_t; v_next]``."""
    xhat_t = np.asarray(xhat_t, dtype=np.float64).reshape(-1)
    v_t = np.asarray(v_t, dtype=np.float64).reshape(-1)
    v_next = np.asarray(v_next, dtype=np.float64).reshape(-1)
    if xhat_t.size != r.n or v_t.size != r.q or v_next.size != r.q:
        raise ValueError(f"expected xhat of size {r.n} and v of size {r.q}")
    return r.gain @ np.concatenate([v_t, xhat_t, v_next])


def run_estimator(r: UioRealization, xhat0, v: Sequence) -> np.ndarray:
    """Estimate states along the measured sequence ``v`` (``N x (m+p)``)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 1:
        v = v.reshape(-1, r.q)
    if v.ndim != 2 or v.shape[1] != r.q:
        raise ValueError(f"v must have {r.q} columns")
    N = v.shape[0]
    if N < 1:
        raise ValueError("need at least one sample")
    out = np.empty((N, r.n))
    out[0] = np.asarray(xhat0, dtype=np.float64).reshape(r.n)
    for t in range(N - 1):
        out[t + 1] = estimate_step(r, out[t], v[t], v[t + 1])
    return out


def simulate_realization(r: UioRealization, z0, v) -> np.ndarray:
    """Outputs of ``z+ = A z + B v``, ``xhat = z + D v``; used to cross-check the estimator."""
    v = np.asarray(v, dtype=np.float64).reshape(-1, r.q)
    z = np.asarray(z0, dtype=np.float64).reshape(r.n)
    out = np.empty((v.shape[0], r.n))
    for t in range(v.shape[0]):
        out[t] = z + r.D_uio @ v[t]
        z = r.A_uio @ z + r.B_uio @ v[t]
    return out


def verify_compatibility(blocks: HankelBlocks, v_pair, x_pair, rtol: float = 1e-8) -> bool:
    """Whether ``[v_t; x_t; v_{t+1}; x_{t+1}]`` lies in the range of the 4-stack.

    ``v_pair`` and ``x_pair`` are ``(2, q)`` and ``(2, n)`` arrays holding two
    consecutive samples.
    """
    v_pair = np.asarray(v_pair, dtype=np.float64).reshape(2, -1)
    x_pair = np.asarray(x_pair, dtype=np.float64).reshape(2, -1)
    w = np.concatenate([v_pair[0], x_pair[0], v_pair[1], x_pair[1]])
    S = blocks.stack4
    if w.size != S.shape[0]:
        raise ValueError(f"sample has {w.size} entries, blocks have {S.shape[0]} rows")
    resid = w - S @ (pinv(S) @ w)
    return float(np.linalg.norm(resid)) / max(1.0, float(np.linalg.norm(w))) < rtol


def trajectory_compatible(blocks: HankelBlocks, v, x, rtol: float = 1e-8) -> bool:
    """Every consecutive pair of a ``(v, x)`` trajectory is compatible."""
    v, x = np.asarray(v, dtype=float), np.asarray(x, dtype=float)
    return all(verify_compatibility(blocks, v[t:t + 2], x[t:t + 2], rtol)
               for t in range(len(v) - 1))


def save_realization(path, r: UioRealization, report: ExistenceReport) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"realization": r.to_dict(), "report": report.to_dict()},
                               indent=2))
    return path


def load_realization(path) -> tuple[UioRealization, dict]:
    obj = json.loads(Path(path).read_text())
    return UioRealization.from_dict(obj["realization"]), obj.get("report", {})
